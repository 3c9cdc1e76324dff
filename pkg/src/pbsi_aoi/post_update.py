"""Block-level MDP over post-update states and the post-update value table.

Each block covers ``n`` slots that start right after a successful update. The
block energy is modelled by a three-point law matched to the first two moments
of the clipped arrival process, and the block cost is an estimate of the
offline-optimal on-demand age for the number of updates the block affords.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ParameterError, SensorParams
from .mdp import FiniteMdp, relative_value_iteration

TAIL_PROB = 1.0 / 18.0


@dataclass(frozen=True)
class BlockEnergyDist:
    points: tuple[float, ...]
    probs: tuple[float, ...]

    @property
    def mean(self) -> float:
        return math.fsum(p * e for e, p in zip(self.points, self.probs))

    @property
    def var(self) -> float:
        m = self.mean
        return math.fsum(p * (e - m) ** 2 for e, p in zip(self.points, self.probs))


def block_energy_distribution(lam: float, sigma: float, n: int) -> BlockEnergyDist:
    if lam <= 0 or sigma < 0 or n < 1:
        raise ParameterError("need lam > 0, sigma >= 0 and n >= 1")
    e0 = n * lam
    if sigma == 0:
        return BlockEnergyDist((e0,), (1.0,))
    spread = 3.0 * sigma * math.sqrt(n)
    e_lo = max(e0 - spread, 1.0)
    if e0 <= e_lo:
        raise ParameterError(f"block mean n*lam = {e0:.6g} must exceed 1 when sigma > 0")
    p_lo = sigma * math.sqrt(n) / (6.0 * (e0 - e_lo))
    p_mid = 17.0 / 18.0 - p_lo
    if p_mid < 0:
        raise ParameterError(f"lower-point mass {p_lo:.6g} exceeds 17/18; block too short")
    return BlockEnergyDist((e_lo, e0, e0 + spread), (p_lo, p_mid, TAIL_PROB))


def allowable_levels(b_hat: int, e: float, n: int, eta: float, B: int) -> range:
    """Integer next-block battery levels reachable from (b_hat, e)."""
    x = b_hat + e
    lo = min(max(x - n * eta, 0.0), B - 1.0)
    hi = min(x, B - 1.0)
    return range(math.ceil(lo - 1e-12), math.floor(hi + 1e-12) + 1)


def block_cost(b_hat: int, e: float, q: int, n: int, eta: float, xi: float, max_aocsi: int, B: int | None = None) -> float:
    """Estimated offline-optimal on-demand age accumulated over one block."""
    if B is not None and q not in allowable_levels(b_hat, e, n, eta, B):
        raise ParameterError(f"q={q} is not an allowable next level for (b_hat={b_hat}, e={e})")
    D = max_aocsi
    u = min(b_hat + e - q, n * eta)
    if u <= 0:
        return D * n * eta
    su = xi * u
    if n / su <= D:
        return n * eta - n / 2.0 + n * n * eta / (2.0 * su)
    return D * n * eta - (D - 1) * su - (D - 1) * (D - 2) * su * (n * eta - su) / (2.0 * (n - su))


def default_block_length(params: SensorParams) -> int:
    return max(1, round(params.battery_capacity / params.lam))


@dataclass(frozen=True)
class PostUpdateTable:
    gain_estimate: float
    values: np.ndarray
    block_length: int
    block_gain: float = float("nan")
    iterations: int = 0
    num_states: int = 0
    ops_per_iteration: int = 0

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("post-update values must be finite")


def build_post_update_mdp(params: SensorParams, n: int) -> tuple[FiniteMdp, BlockEnergyDist]:
    B, eta, xi, D = params.battery_capacity, params.request_prob, params.channel_success, params.max_aocsi
    dist = block_energy_distribution(params.lam, params.sigma, n)
    m = len(dist.points)
    rows = []
    labels = []
    for b in range(B):
        for j, e in enumerate(dist.points):
            z = b * m + j
            labels.append((b, j))
            levels = allowable_levels(b, e, n, eta, B)
            if len(levels) == 0:
                raise ParameterError(f"no allowable block action at (b_hat={b}, e={e:.6g})")
            for q in levels:
                nxt = [q * m + k for k in range(m)]
                rows.append((z, q, block_cost(b, e, q, n, eta, xi, D), nxt, list(dist.probs)))
    return FiniteMdp.from_rows(B * m, rows, labels=labels), dist


def solve_post_update_values(
    params: SensorParams, n: int | None = None, tol: float = 1e-6, max_iters: int = 100_000
) -> PostUpdateTable:
    if n is None:
        n = default_block_length(params)
    if n < 1:
        raise ParameterError("block length must be >= 1")
    mdp, dist = build_post_update_mdp(params, n)
    sol = relative_value_iteration(mdp, 0, tol, max_iters)
    m = len(dist.points)
    h_block = sol.bias.reshape(params.battery_capacity, m)
    values = h_block @ np.asarray(dist.probs)
    return PostUpdateTable(
        gain_estimate=sol.gain / n,
        values=values,
        block_length=n,
        block_gain=sol.gain,
        iterations=sol.iterations,
        num_states=mdp.num_states,
        ops_per_iteration=sol.ops_per_iteration,
    )


def h_tilde_at(table: PostUpdateTable, x):
    """Linear interpolation of the post-update values, clamped at both ends."""
    grid = np.arange(len(table.values), dtype=np.float64)
    return np.interp(x, grid, table.values)
