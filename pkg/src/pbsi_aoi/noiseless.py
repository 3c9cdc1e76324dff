"""Inferred-pBSI MDP for a noiseless sensor-to-edge channel and its optimal (NO) policy."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import EnergyModel, ParameterError, SensorParams
from .mdp import FiniteMdp, PolicyTable, relative_value_iteration


class NoiselessState(NamedTuple):
    r: int
    b_hat: int
    delta: int
    d: int


@dataclass(frozen=True)
class NoiselessParams:
    sensor: SensorParams
    max_aofbl: int | None = None

    def __post_init__(self):
        if self.sensor.channel_success != 1.0:
            raise ParameterError("the noiseless model requires channel_success == 1")
        if self.max_aofbl is None:
            object.__setattr__(self, "max_aofbl", self.sensor.max_aocsi)
        if self.max_aofbl < 1:
            raise ParameterError("max_aofbl must be >= 1")
        tau0 = min(self.sensor.max_aocsi, self.max_aofbl)
        if self.sensor.lam * tau0 < 3:
            warnings.warn(
                f"lambda*min(max_aocsi, max_aofbl) = {self.sensor.lam * tau0:.3g} < 3; "
                "age truncation may distort the inferred battery level",
                RuntimeWarning,
                stacklevel=2,
            )

    @classmethod
    def from_sensor(cls, sensor: SensorParams, max_aofbl: int | None = None) -> "NoiselessParams":
        """Noiseless counterpart of ``sensor`` (channel forced to success 1)."""
        return cls(sensor.replace(channel_success=1.0), max_aofbl)


def state_count_formula(B: int, Dmax: int, Fmax: int) -> int:
    """Closed-form number of feasible states (capacity, max AoCSI, max AoFBL)."""
    t1 = min(Dmax, Fmax + 1)
    return 2 * B * Dmax + 2 * Fmax * (Dmax - t1 + 1) + (t1 - 1) * (t1 - 2)


def is_feasible(b_hat: int, delta: int, d: int, max_aocsi: int) -> bool:
    if d > 0 and b_hat != 0:
        return False
    if d > 0 and delta < max_aocsi and delta <= d:
        return False
    return True


def enumerate_states(B: int, max_aocsi: int, max_aofbl: int) -> list[NoiselessState]:
    """Feasible states in lexicographic (r, b_hat, delta, d) order."""
    out = []
    for r in (0, 1):
        for b in range(B):
            for delta in range(1, max_aocsi + 1):
                if b > 0:
                    out.append(NoiselessState(r, b, delta, 0))
                    continue
                for d in range(0, max_aofbl + 1):
                    if is_feasible(b, delta, d, max_aocsi):
                        out.append(NoiselessState(r, b, delta, d))
    return out


def aoibl(delta, d):
    """Slots since the most recent update attempt."""
    return delta if d == 0 else d


def growth_matrix(model: EnergyModel, capacity: int) -> np.ndarray:
    """One-slot battery kernel T[x, y] = P{min(x + E, capacity) = y}."""
    pmf = model.clipped_pmf(capacity)
    T = np.zeros((capacity + 1, capacity + 1))
    for x in range(capacity + 1):
        for e, p in enumerate(pmf):
            T[x, min(x + e, capacity)] += p
    return T


def battery_growth_distribution(b_hat: int, age: int, model: EnergyModel, capacity: int) -> np.ndarray:
    """Distribution of min(b_hat + sum of ``age`` arrivals, capacity) on 0..capacity."""
    if not 0 <= b_hat <= capacity:
        raise ParameterError("b_hat must lie in [0, capacity]")
    dist = np.zeros(capacity + 1)
    dist[b_hat] = 1.0
    T = growth_matrix(model, capacity)
    for _ in range(age):
        dist = dist @ T
    return dist


def _growth_table(model: EnergyModel, capacity: int, max_age: int) -> np.ndarray:
    """table[age, b_hat, :] for age in 0..max_age."""
    T = growth_matrix(model, capacity)
    out = np.empty((max_age + 1, capacity + 1, capacity + 1))
    out[0] = np.eye(capacity + 1)
    for a in range(1, max_age + 1):
        out[a] = out[a - 1] @ T
    return out


def build_noiseless_mdp(params: NoiselessParams) -> FiniteMdp:
    sp = params.sensor
    B, Dm, Fm, eta = sp.battery_capacity, sp.max_aocsi, params.max_aofbl, sp.request_prob
    states = enumerate_states(B, Dm, Fm)
    index = {s: i for i, s in enumerate(states)}
    growth = _growth_table(sp.energy, B, max(Dm, Fm))
    rho = ((0, 1.0 - eta), (1, eta))
    rho = tuple((r, p) for r, p in rho if p > 0)

    rows = []
    for i, (r, b, delta, d) in enumerate(states):
        nd = min(delta + 1, Dm)
        # a = 0: frozen battery info, ages tick
        nf = min(d + 1, Fm) if d > 0 else 0
        nxt = [index[(r2, b, nd, nf)] for r2, _ in rho]
        rows.append((i, 0, r * nd, nxt, [p for _, p in rho]))
        if r == 0:
            continue
        # a = 1: success lands on a post-update state, failure reveals an empty battery
        beta = growth[aoibl(delta, d), b]
        eps = float(beta[0])
        nxt, prob = [], []
        for r2, pr in rho:
            for b2 in range(B):
                p = beta[b2 + 1]
                if p > 0:
                    nxt.append(index[(r2, b2, 1, 0)])
                    prob.append(pr * p)
            if eps > 0:
                nxt.append(index[(r2, 0, nd, 1)])
                prob.append(pr * eps)
        rows.append((i, 1, eps * nd + 1.0 - eps, nxt, prob))
    return FiniteMdp.from_rows(len(states), rows, labels=states)


def solve_no_policy(params: NoiselessParams, tol: float = 1e-6, max_iters: int = 100_000) -> PolicyTable:
    mdp = build_noiseless_mdp(params)
    sol = relative_value_iteration(mdp, 0, tol, max_iters)
    return PolicyTable(
        columns=("r", "b_hat", "delta", "d"),
        states=np.array(mdp.labels, dtype=np.int64),
        actions=sol.policy,
        gain=sol.gain,
        bias=sol.bias,
        iterations=sol.iterations,
    )
