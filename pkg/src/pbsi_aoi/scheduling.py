"""Multi-sensor selection under the simultaneous-update limit, and the OFT baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cn import CnContext, InferredPbsi, cn_decide
from .core import (
    STREAM_CHANNEL,
    STREAM_ENERGY,
    STREAM_REQUEST,
    ParameterError,
    SensorParams,
    episode_seed,
    substream,
)
from .dynamics import energy_inverse_cdf, step_physical


@dataclass(frozen=True)
class SensorSnapshot:
    sensor: int
    r: int
    state: InferredPbsi
    params: SensorParams


def update_weight(b_hat, delta, d, xi, p1):
    """Success probability of a command given the inferred battery information.

    With an empty inferred battery, the chance that energy has arrived is taken
    over the age of the inferred battery level (slots since the last attempt).
    """
    b_hat = np.asarray(b_hat)
    d = np.asarray(d, dtype=float)
    tau = np.where(d == 0, delta, d)
    energy_seen = np.where(b_hat > 0, 1.0, 1.0 - (1.0 - np.asarray(p1, dtype=float)) ** tau)
    return xi * energy_seen


def update_gain(b_hat, delta, d, alpha, xi, p1, max_aocsi):
    """Array form of the weighted update gain."""
    return alpha * update_weight(b_hat, delta, d, xi, p1) * (np.minimum(np.asarray(delta) + 1, max_aocsi) - 1)


def weighted_update_gain(snap: SensorSnapshot, p1: float | None = None) -> float:
    p = snap.params
    p1 = p.p1 if p1 is None else p1
    s = snap.state
    return float(update_gain(s.b_hat, s.delta, s.d, p.weight, p.channel_success, p1, p.max_aocsi))


def top_k_mask(eligible, score, k0: int) -> np.ndarray:
    """Mark up to ``k0`` eligible entries per row with the largest score.

    Works on the last axis; ties go to the lower index.
    """
    eligible = np.asarray(eligible, dtype=bool)
    if k0 >= eligible.shape[-1] or (eligible.sum(axis=-1) <= k0).all():
        return eligible.copy()
    key = np.where(eligible, np.asarray(score, dtype=float), -np.inf)
    order = np.argsort(-key, axis=-1, kind="stable")[..., :k0]
    out = np.zeros_like(eligible)
    np.put_along_axis(out, order, True, axis=-1)
    return out & eligible


def _cn_candidates(snapshots: Sequence[SensorSnapshot], ctxs: Sequence[CnContext]) -> np.ndarray:
    if len(snapshots) != len(ctxs):
        raise ValueError("one CN context per sensor is required")
    return np.array([bool(cn_decide(s.r, s.state, c)) for s, c in zip(snapshots, ctxs)])


def wugc_select(snapshots: Sequence[SensorSnapshot], ctxs: Sequence[CnContext], k0: int) -> np.ndarray:
    kappa = _cn_candidates(snapshots, ctxs)
    gains = np.array([weighted_update_gain(s, c.p1) for s, c in zip(snapshots, ctxs)])
    return top_k_mask(kappa, gains, k0).astype(np.int64)


def maf_select(snapshots: Sequence[SensorSnapshot], k0: int) -> np.ndarray:
    req = np.array([bool(s.r) for s in snapshots])
    ages = np.array([min(s.state.delta, s.params.max_aocsi) for s in snapshots], dtype=float)
    return top_k_mask(req, ages, k0).astype(np.int64)


def random_cn_select(snapshots, ctxs, k0: int, rng: np.random.Generator) -> np.ndarray:
    kappa = _cn_candidates(snapshots, ctxs)
    keys = rng.random(len(snapshots))
    return top_k_mask(kappa, keys, k0).astype(np.int64)


@dataclass(frozen=True)
class OftThresholds:
    """AoCSI thresholds for slots with and without a request (``None`` = never)."""

    with_request: int | None
    without_request: int | None
    max_aocsi: int = 48

    def __post_init__(self):
        for v in (self.with_request, self.without_request):
            if v is not None and not 1 <= v <= self.max_aocsi:
                raise ParameterError(f"threshold {v} outside [1, {self.max_aocsi}]")

    def decide(self, r, aocsi):
        age = np.minimum(aocsi, self.max_aocsi)
        never = self.max_aocsi + 1
        t1 = never if self.with_request is None else self.with_request
        t0 = never if self.without_request is None else self.without_request
        r = np.asarray(r, dtype=bool)
        return np.where(r, age >= t1, age >= t0)


@dataclass(frozen=True)
class OftSearchResult:
    thresholds: OftThresholds
    costs: np.ndarray  # [with_request - 1, without_request - 1], index max_aocsi = never
    eval_budget: int


def oft_search(params: SensorParams, eval_budget: int = 200_000, seed: int = 0, chunk: int = 4096) -> OftSearchResult:
    """Exhaustive threshold search with every pair driven by the same random draws."""
    if eval_budget < 1:
        raise ParameterError("eval_budget must be positive")
    Dm, B, xi, eta = params.max_aocsi, params.battery_capacity, params.channel_success, params.request_prob
    levels = np.arange(1, Dm + 2)  # Dm + 1 acts as "never"
    t1, t0 = (a.ravel() for a in np.meshgrid(levels, levels, indexing="ij"))
    n = t1.size
    battery = np.zeros(n, dtype=np.int64)
    aocsi = np.ones(n, dtype=np.int64)
    total = np.zeros(n)
    ep = episode_seed(seed, 0)
    rng_r, rng_e, rng_c = (substream(ep, 0, s) for s in (STREAM_REQUEST, STREAM_ENERGY, STREAM_CHANNEL))
    draw_energy = energy_inverse_cdf(params.energy.clipped_pmf(B))
    done = 0
    while done < eval_budget:
        m = min(chunk, eval_budget - done)
        req = rng_r.random(m) < eta
        energy = draw_energy(rng_e.random(m))
        chan = rng_c.random(m)
        for j in range(m):
            age = np.minimum(aocsi, Dm)
            act = age >= (t1 if req[j] else t0)
            battery, aocsi, _, _, _ = step_physical(battery, aocsi, act, chan[j], energy[j], xi, B)
            if req[j]:
                total += np.minimum(aocsi, Dm)
        done += m
    costs = (total / eval_budget).reshape(Dm + 1, Dm + 1)
    i, j = np.unravel_index(int(np.argmin(costs)), costs.shape)
    as_thr = lambda k: None if k == Dm else int(k + 1)  # noqa: E731
    return OftSearchResult(OftThresholds(as_thr(i), as_thr(j), Dm), costs, eval_budget)


def msur_to_k0(msur: float, num_sensors: int) -> int:
    """Simultaneous-update limit for a maximum simultaneous update ratio."""
    if not 0 < msur <= 1:
        raise ParameterError("MSUR must lie in (0, 1]")
    return max(1, min(num_sensors, math.floor(msur * num_sensors + 0.5)))
