"""Inferred-pBSI tracking over packet-drop channels and the current-next (CN) rule.

The CN rule compares two strategies from a requesting state: keep updating from
the current request slot until one succeeds, or skip the current request and
start from the next one. Both values are affine in the look-ahead horizon N
with the same slope g*, so the comparison is carried out on the N-free parts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import ParameterError, SensorParams
from .post_update import PostUpdateTable, h_tilde_at, solve_post_update_values

NO_TX = "no_tx"
FAILURE = "failure"


class Success(NamedTuple):
    battery: int


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class InferredPbsi:
    b_hat: int = 0
    delta: int = 1
    d: float = 0.0

    def __post_init__(self):
        if self.delta < 1:
            raise ValueError("AoCSI must be >= 1")
        if self.d < 0 or 0 < self.d < 1:
            raise ValueError("AoFBL must be 0 or >= 1")
        if self.d > 0 and self.b_hat != 0:
            raise ValueError("a failure-inferred age implies an empty inferred battery")


def aoibl(delta, d):
    """Age of the inferred battery level (slots since the last attempt)."""
    return delta if d == 0 else d


def _theta_over_lam(tau, lam, p1):
    theta = 1.0 - (1.0 - p1) ** tau
    ratio = theta / lam if lam > 0 else 0.0
    return theta, ratio


def failure_aofbl(tau: float, xi: float, lam: float, p1: float) -> float:
    """Generalized AoFBL after a failed attempt from an empty inferred battery."""
    if xi >= 1.0:  # a failure on a noiseless channel means the battery was empty
        return 1.0
    theta, ratio = _theta_over_lam(tau, lam, p1)
    return (1.0 - xi) * (tau - ratio) / (1.0 - theta * xi) + 1.0


def update_inferred_pbsi(state: InferredPbsi, action: int, outcome, params: SensorParams) -> InferredPbsi:
    """One-slot evolution of the tracker from the edge node's observables."""
    b, delta, d = state.b_hat, state.delta, state.d
    if action == 0:
        if outcome != NO_TX:
            raise ProtocolError("no command was issued, so no outcome can be observed")
        return InferredPbsi(b, delta + 1, d + 1.0 if d > 0 else 0.0)
    if isinstance(outcome, Success):
        if not 1 <= outcome.battery <= params.battery_capacity:
            raise ProtocolError(f"reported battery {outcome.battery} outside [1, {params.battery_capacity}]")
        return InferredPbsi(outcome.battery - 1, 1, 0.0)
    if outcome != FAILURE:
        raise ProtocolError(f"unexpected outcome {outcome!r} for a commanded update")
    if b >= 1:
        return InferredPbsi(b - 1, delta + 1, 0.0)
    tau = aoibl(delta, d)
    return InferredPbsi(0, delta + 1, failure_aofbl(tau, params.channel_success, params.lam, params.p1))


def advance_trackers(b_hat, delta, d, action, success, reported, xi, lam, p1):
    """Vectorised form of :func:`update_inferred_pbsi` over arrays of sensors.

    ``xi``, ``lam`` and ``p1`` broadcast against the state arrays.
    """
    failed = action & ~success
    new_b = np.where(success, reported - 1, np.where(failed, np.maximum(b_hat - 1, 0), b_hat))
    new_d = np.where(action, 0.0, np.where(d > 0, d + 1.0, 0.0))
    blind = failed & (b_hat == 0)
    if blind.any():
        idx = np.nonzero(blind)
        shape = np.shape(b_hat)
        tau = np.where(d == 0, delta, d)[idx].astype(float)
        xs, ls, ps = (np.broadcast_to(np.asarray(v, dtype=float), shape)[idx] for v in (xi, lam, p1))
        theta = 1.0 - (1.0 - ps) ** tau
        ratio = np.divide(theta, ls, out=np.zeros_like(theta), where=ls > 0)
        lossy = xs < 1.0
        denom = np.where(lossy, 1.0 - theta * xs, 1.0)
        new_d[idx] = np.where(lossy, (1.0 - xs) * (tau - ratio) / denom, 0.0) + 1.0
    new_delta = np.where(success, 1, delta + 1)
    return new_b, new_delta, new_d


@dataclass(frozen=True)
class CnContext:
    params: SensorParams
    lam: float
    p1: float
    gain: float
    post: PostUpdateTable

    def __post_init__(self):
        if not self.lam > 0:
            raise ParameterError("the CN rule needs a positive effective arrival rate")
        if not 0 < self.p1 <= 1:
            raise ParameterError("P{E > 0} must lie in (0, 1]")

    @classmethod
    def from_params(cls, params: SensorParams, block_length: int | None = None, tol: float = 1e-6) -> "CnContext":
        post = solve_post_update_values(params, block_length, tol)
        return cls(params, params.lam, params.p1, post.gain_estimate, post)

    def h(self, x):
        return float(h_tilde_at(self.post, x))


def phi0(i, eta):
    """Expected one-based slot index of the i-th request."""
    return 1.0 + (i - 1) / eta


def psi0(delta, i, eta):
    return delta + phi0(i, eta)


def psi1(delta, i: int, ctx: CnContext) -> float:
    """Sum of truncated ages served at the first i request slots."""
    eta, D = ctx.params.request_prob, ctx.params.max_aocsi
    return math.fsum(min(psi0(delta, j, eta), D) for j in range(1, int(i) + 1))


def psi2(delta, x: float, ctx: CnContext) -> float:
    """psi1 linearly extended to real x."""
    eta, D = ctx.params.request_prob, ctx.params.max_aocsi
    fl = math.floor(x)
    frac = x - fl
    out = psi1(delta, fl, ctx)
    if frac > 0:
        out += frac * min(psi0(delta, math.ceil(x), eta), D)
    return out


def phi1(b: float, ctx: CnContext) -> float:
    """Expected number of further steps until a success after the planned attempts fail."""
    lam, xi, eta = ctx.lam, ctx.params.channel_success, ctx.params.request_prob
    return max(1.0 / (xi * lam) - b / lam, 1.0 / (xi * eta) - 1.0 / eta + 1.0)


def phi2(x: float, eta: float) -> float:
    return 1.0 + eta * (x - 1.0)


def v_hat(b: float, delta, i: int, ctx: CnContext, horizon: float = 0.0) -> float:
    """Value when the first success lands on the i-th request slot."""
    eta, lam = ctx.params.request_prob, ctx.lam
    f = phi0(i, eta)
    return 1.0 + psi1(delta, i - 1, ctx) + (horizon - f) * ctx.gain + ctx.h(b - i + lam * f - lam)


def v_tilde(b: float, delta, x: float, ctx: CnContext, horizon: float = 0.0) -> float:
    """Value when the first success lands on (real-valued) step x."""
    eta, lam = ctx.params.request_prob, ctx.lam
    if x < 1:
        raise ValueError("x must be >= 1")
    arg = max(b - phi2(x, eta) + lam * x - lam, 0.0)
    return 1.0 + eta * psi2(delta, x - 1.0, ctx) + (horizon - x) * ctx.gain + ctx.h(arg)


def strategy_values(b_hat: int, delta, ctx: CnContext, horizon: float = 0.0) -> tuple[float, float]:
    """Estimated values of updating now and of deferring to the next request."""
    if b_hat < 1:
        raise ValueError("strategy values are defined for b_hat >= 1")
    p = ctx.params
    lam, eta, xi, B = ctx.lam, p.request_prob, p.channel_success, p.battery_capacity
    b0 = min(b_hat + lam * delta, B)
    nbar = math.floor(b0)
    b0n = min(b0 + lam / eta, B)
    b1 = b0 - nbar + lam * phi0(nbar, eta)
    b2 = b0n - nbar + lam * phi0(nbar, eta)
    miss = (1.0 - xi) ** nbar

    now = [xi * (1.0 - xi) ** (i - 1) * v_hat(b0, delta, i, ctx, horizon) for i in range(1, nbar + 1)]
    tail_now = psi1(delta, nbar, ctx) + v_tilde(
        b1, psi0(delta, nbar, eta), phi1(b1, ctx), ctx, horizon - phi0(nbar, eta)
    )
    later = [
        xi * (1.0 - xi) ** (i - 1) * v_hat(b0n - lam / eta + 1.0, delta, i + 1, ctx, horizon)
        for i in range(1, nbar + 1)
    ]
    tail_later = psi1(delta, nbar + 1, ctx) + v_tilde(
        b2, psi0(delta, nbar + 1, eta), phi1(b2, ctx), ctx, horizon - phi0(nbar + 1, eta)
    )
    return math.fsum(now) + miss * tail_now, math.fsum(later) + miss * tail_later


def delta_v(b_hat: int, delta, ctx: CnContext, horizon: float = 0.0) -> float:
    """Value of updating now minus value of waiting for the next request.

    ``horizon`` is the look-ahead N; the result does not depend on it.
    """
    now, later = strategy_values(b_hat, delta, ctx, horizon)
    return now - later


def cn_decide(r: int, state: InferredPbsi, ctx: CnContext) -> int:
    if not r:
        return 0
    return int(delta_v(max(state.b_hat, 1), state.delta, ctx) < 0)


def saturation_age(ctx: CnContext) -> int:
    """AoCSI beyond which the CN decision no longer changes."""
    p = ctx.params
    return max(p.max_aocsi, math.ceil((p.battery_capacity - 1) / ctx.lam)) + 1


@dataclass(frozen=True)
class CnTable:
    """Tabulated CN decisions for requesting states.

    ``actions[b, delta - 1]`` for b in 0..B-1 and delta in 1..max_delta; larger
    ages reuse the last column.
    """

    actions: np.ndarray
    max_delta: int

    def decide(self, r, b_hat, delta):
        col = np.minimum(delta, self.max_delta) - 1
        return (np.asarray(r, dtype=bool) & self.actions[b_hat, col]).astype(np.int64) if np.ndim(r) else int(
            bool(r) and self.actions[b_hat, col]
        )

    def thresholds(self, upto: int | None = None) -> np.ndarray:
        """Smallest AoCSI with action 1 per b_hat (``upto + 1`` when none within range)."""
        upto = self.max_delta if upto is None else upto
        out = np.full(self.actions.shape[0], upto + 1)
        for b in range(self.actions.shape[0]):
            hits = np.flatnonzero(self.actions[b, :upto])
            if hits.size:
                out[b] = hits[0] + 1
        return out


def cn_action_table(ctx: CnContext) -> CnTable:
    B = ctx.params.battery_capacity
    dmax = saturation_age(ctx)
    act = np.zeros((B, dmax), dtype=bool)
    for b in range(1, B):
        for delta in range(1, dmax + 1):
            act[b, delta - 1] = delta_v(b, delta, ctx) < 0
    act[0] = act[1] if B > 1 else act[0]
    return CnTable(act, dmax)


def policy_map(ctx: CnContext, max_delta: int | None = None) -> np.ndarray:
    """CN actions on the (b_hat, delta) grid for requesting states with d = 0."""
    max_delta = ctx.params.max_aocsi if max_delta is None else max_delta
    B = ctx.params.battery_capacity
    grid = np.zeros((B, max_delta), dtype=np.int64)
    for b in range(B):
        for delta in range(1, max_delta + 1):
            grid[b, delta - 1] = cn_decide(1, InferredPbsi(b, delta, 0.0), ctx)
    return grid
