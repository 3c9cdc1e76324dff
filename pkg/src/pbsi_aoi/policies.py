"""Policy registry and vectorised runners consumed by the simulator.

A policy is bound to a :class:`SystemConfig` once (solving any tables it needs)
and then decides actions for a block of episodes at a time: every array in a
:class:`SlotView` has shape ``(episodes, sensors)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .cn import CnContext, cn_action_table
from .core import ParameterError, SensorParams, SystemConfig
from .ebsi import solve_ebsi_policy
from .noiseless import NoiselessParams, solve_no_policy
from .scheduling import OftThresholds, oft_search, top_k_mask, update_gain

POLICY_NAMES = ("no", "cn", "ebsi-opt", "oft", "maf", "wugc-cn", "random-cn", "always", "never")


@dataclass
class SlotView:
    t: int
    r: np.ndarray
    battery: np.ndarray
    aocsi: np.ndarray  # untruncated
    b_hat: np.ndarray
    d: np.ndarray
    sched_u: np.ndarray | None
    k0: int


@dataclass(frozen=True)
class SensorArrays:
    """Per-sensor constants laid out for broadcasting against (episodes, sensors)."""

    kinds: tuple[SensorParams, ...]
    kind_of: np.ndarray
    capacity: np.ndarray
    max_aocsi: np.ndarray
    alpha: np.ndarray
    eta: np.ndarray
    xi: np.ndarray
    lam: np.ndarray
    p1: np.ndarray

    @classmethod
    def from_config(cls, config: SystemConfig) -> "SensorArrays":
        kinds: list[SensorParams] = []
        kind_of = []
        for s in config.sensors:
            if s not in kinds:
                kinds.append(s)
            kind_of.append(kinds.index(s))
        per = [kinds[i] for i in kind_of]
        arr = lambda f, dt=float: np.array([f(s) for s in per], dtype=dt)  # noqa: E731
        lam_of = {i: k.lam for i, k in enumerate(kinds)}
        return cls(
            kinds=tuple(kinds),
            kind_of=np.array(kind_of, dtype=np.int64),
            capacity=arr(lambda s: s.battery_capacity, np.int64),
            max_aocsi=arr(lambda s: s.max_aocsi, np.int64),
            alpha=arr(lambda s: s.weight),
            eta=arr(lambda s: s.request_prob),
            xi=arr(lambda s: s.channel_success),
            lam=np.array([lam_of[i] for i in kind_of]),
            p1=arr(lambda s: s.p1),
        )


# cached solvers, keyed by the (hashable) sensor parameters


@lru_cache(maxsize=256)
def cn_context(params: SensorParams) -> CnContext:
    return CnContext.from_params(params)


@lru_cache(maxsize=256)
def cn_table(params: SensorParams):
    return cn_action_table(cn_context(params))


@lru_cache(maxsize=256)
def no_table(params: SensorParams) -> np.ndarray:
    """NO actions for requesting states as a dense [b_hat, delta - 1, d] array."""
    np_ = NoiselessParams.from_sensor(params)
    table = solve_no_policy(np_)
    B, Dm, Fm = params.battery_capacity, params.max_aocsi, np_.max_aofbl
    out = np.zeros((B, Dm, Fm + 1), dtype=bool)
    st = table.states
    req = st[:, 0] == 1
    out[st[req, 1], st[req, 2] - 1, st[req, 3]] = table.actions[req] == 1
    return out


@lru_cache(maxsize=256)
def ebsi_table(params: SensorParams) -> np.ndarray:
    """eBSI-Opt actions for requesting states as a dense [b, delta - 1] array."""
    table = solve_ebsi_policy(params)
    out = np.zeros((params.battery_capacity + 1, params.max_aocsi), dtype=bool)
    st = table.states
    req = st[:, 0] == 1
    out[st[req, 1], st[req, 2] - 1] = table.actions[req] == 1
    return out


@lru_cache(maxsize=256)
def oft_thresholds(params: SensorParams, eval_budget: int = 200_000, seed: int = 0) -> OftThresholds:
    return oft_search(params, eval_budget, seed).thresholds


def _stack(tables: list[np.ndarray]) -> np.ndarray:
    """Stack per-kind tables, padding each axis by edge replication."""
    shape = np.max([t.shape for t in tables], axis=0)
    out = []
    for t in tables:
        pad = [(0, int(n - m)) for n, m in zip(shape, t.shape)]
        out.append(np.pad(t, pad, mode="edge"))
    return np.stack(out)


class Runner:
    needs_schedule = False

    def decide(self, view: SlotView) -> np.ndarray:
        raise NotImplementedError

    def observe(self, action, success, reported) -> None:
        pass


class _CnRunner(Runner):
    def __init__(self, sa: SensorArrays):
        tabs = [cn_table(k) for k in sa.kinds]
        self.tab = _stack([t.actions for t in tabs])
        self.dmax = np.array([tabs[i].max_delta for i in sa.kind_of])
        self.kind = sa.kind_of
        self.sa = sa

    def candidates(self, v: SlotView) -> np.ndarray:
        b = np.maximum(v.b_hat, 1)
        col = np.minimum(v.aocsi, self.dmax) - 1
        return v.r & self.tab[self.kind, b, col]

    def decide(self, v):
        return self.candidates(v)


class _WugcRunner(_CnRunner):
    def decide(self, v):
        kappa = self.candidates(v)
        if v.k0 >= kappa.shape[1]:
            return kappa
        sa = self.sa
        gain = update_gain(v.b_hat, v.aocsi, v.d, sa.alpha, sa.xi, sa.p1, sa.max_aocsi)
        return top_k_mask(kappa, gain, v.k0)


class _RandomCnRunner(_CnRunner):
    needs_schedule = True

    def decide(self, v):
        return top_k_mask(self.candidates(v), v.sched_u, v.k0)


class _NoRunner(Runner):
    """NO table driven by its own noiseless-law tracker (any failure reads as an empty battery)."""

    def __init__(self, sa: SensorArrays, shape):
        self.tab = _stack([no_table(k) for k in sa.kinds])
        self.kind = sa.kind_of
        self.dm = sa.max_aocsi
        self.fm = np.array([no_table(sa.kinds[i]).shape[2] - 1 for i in sa.kind_of])
        self.nb = np.zeros(shape, dtype=np.int64)
        self.nd = np.zeros(shape, dtype=np.int64)

    def decide(self, v):
        col = np.minimum(v.aocsi, self.dm) - 1
        return v.r & self.tab[self.kind, self.nb, col, self.nd]

    def observe(self, action, success, reported):
        failed = action & ~success
        self.nd = np.where(failed, 1, np.where(self.nd > 0, np.minimum(self.nd + 1, self.fm), 0))
        self.nb = np.where(success, reported - 1, np.where(failed, 0, self.nb))
        self.nd = np.where(success, 0, self.nd)


class _EbsiRunner(Runner):
    def __init__(self, sa: SensorArrays, inferred: bool):
        self.tab = _stack([ebsi_table(k) for k in sa.kinds])
        self.kind = sa.kind_of
        self.dm = sa.max_aocsi
        self.inferred = inferred

    def decide(self, v):
        b = v.b_hat if self.inferred else v.battery
        return v.r & self.tab[self.kind, b, np.minimum(v.aocsi, self.dm) - 1]


class _OftRunner(Runner):
    def __init__(self, sa: SensorArrays, budget: int, seed: int):
        thr = [oft_thresholds(k, budget, seed) for k in sa.kinds]
        never = lambda t, x: t.max_aocsi + 1 if x is None else x  # noqa: E731
        self.t1 = np.array([never(thr[i], thr[i].with_request) for i in sa.kind_of])
        self.t0 = np.array([never(thr[i], thr[i].without_request) for i in sa.kind_of])
        self.dm = sa.max_aocsi

    def decide(self, v):
        age = np.minimum(v.aocsi, self.dm)
        return np.where(v.r, age >= self.t1, age >= self.t0)


class _MafRunner(Runner):
    def __init__(self, sa: SensorArrays):
        self.dm = sa.max_aocsi

    def decide(self, v):
        return top_k_mask(v.r, np.minimum(v.aocsi, self.dm), v.k0)


class _AlwaysRunner(Runner):
    def decide(self, v):
        return v.r.copy()


class _NeverRunner(Runner):
    def decide(self, v):
        return np.zeros_like(v.r)


@dataclass(frozen=True)
class Policy:
    """A named policy plus its options; ``bind`` prepares a runner for a block."""

    name: str
    options: dict = field(default_factory=dict, hash=False, compare=False)
    label: str | None = None

    def __post_init__(self):
        if self.name not in POLICY_NAMES:
            raise ParameterError(f"unknown policy {self.name!r}; choose from {', '.join(POLICY_NAMES)}")

    @property
    def display(self) -> str:
        return self.label or self.name

    def prepare(self, config: SystemConfig) -> None:
        """Solve every table the policy needs (so worker processes only look them up)."""
        sa = SensorArrays.from_config(config)
        self.bind(config, sa, (1, config.num_sensors))

    def bind(self, config: SystemConfig, sa: SensorArrays, shape) -> Runner:
        n = self.name
        if n == "cn":
            return _CnRunner(sa)
        if n == "wugc-cn":
            return _WugcRunner(sa)
        if n == "random-cn":
            return _RandomCnRunner(sa)
        if n == "no":
            return _NoRunner(sa, shape)
        if n == "ebsi-opt":
            return _EbsiRunner(sa, bool(self.options.get("inferred", False)))
        if n == "oft":
            return _OftRunner(sa, int(self.options.get("eval_budget", 200_000)), int(self.options.get("seed", 0)))
        if n == "maf":
            return _MafRunner(sa)
        if n == "always":
            return _AlwaysRunner()
        return _NeverRunner()


def make_policy(name: str, label: str | None = None, **options) -> Policy:
    return Policy(name, dict(options), label)
