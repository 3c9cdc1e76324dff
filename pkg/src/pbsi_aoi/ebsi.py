"""Exact-battery-state (eBSI) MDP, used as the near-optimality yardstick."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .core import SensorParams
from .mdp import FiniteMdp, PolicyTable, relative_value_iteration


class EbsiState(NamedTuple):
    r: int
    b: int
    delta: int


def enumerate_ebsi_states(B: int, max_aocsi: int) -> list[EbsiState]:
    return [EbsiState(r, b, d) for r in (0, 1) for b in range(B + 1) for d in range(1, max_aocsi + 1)]


def build_ebsi_mdp(params: SensorParams) -> FiniteMdp:
    """State (request, true battery, AoCSI); energy is spent on every transmission."""
    B, Dm = params.battery_capacity, params.max_aocsi
    eta, xi = params.request_prob, params.channel_success
    pmf = params.energy.clipped_pmf(B)
    states = enumerate_ebsi_states(B, Dm)
    index = {s: i for i, s in enumerate(states)}
    rho = tuple((r, p) for r, p in ((0, 1.0 - eta), (1, eta)) if p > 0)
    arrivals = [(e, p) for e, p in enumerate(pmf) if p > 0]

    def battery_next(b0):
        out: dict[int, float] = {}
        for e, p in arrivals:
            nb = min(b0 + e, B)
            out[nb] = out.get(nb, 0.0) + p
        return out

    rows = []
    for i, (r, b, delta) in enumerate(states):
        nd = min(delta + 1, Dm)
        idle = battery_next(b)
        nxt = [index[(r2, b2, nd)] for r2, _ in rho for b2 in idle]
        prob = [pr * pb for _, pr in rho for pb in idle.values()]
        rows.append((i, 0, r * nd, nxt, prob))
        if r == 0:
            continue
        if b == 0:
            # command issued but nothing can be sent
            rows.append((i, 1, nd, nxt, prob))
            continue
        spent = battery_next(b - 1)
        nxt, prob = [], []
        for r2, pr in rho:
            for b2, pb in spent.items():
                nxt.append(index[(r2, b2, 1)])
                prob.append(pr * pb * xi)
                if xi < 1.0:
                    nxt.append(index[(r2, b2, nd)])
                    prob.append(pr * pb * (1.0 - xi))
        rows.append((i, 1, xi + (1.0 - xi) * nd, nxt, prob))
    return FiniteMdp.from_rows(len(states), rows, labels=states)


def solve_ebsi_policy(params: SensorParams, tol: float = 1e-6, max_iters: int = 100_000) -> PolicyTable:
    mdp = build_ebsi_mdp(params)
    sol = relative_value_iteration(mdp, 0, tol, max_iters)
    return PolicyTable(
        columns=("r", "b", "delta"),
        states=np.array(mdp.labels, dtype=np.int64),
        actions=sol.policy,
        gain=sol.gain,
        bias=sol.bias,
        iterations=sol.iterations,
    )


def threshold_violations(table: PolicyTable) -> list[tuple[int, int]]:
    """(b, delta) pairs where the policy updates at delta but not at delta + 1."""
    act = table.as_dict()
    bad = []
    bs = sorted({int(s[1]) for s in table.states})
    ds = sorted({int(s[2]) for s in table.states})
    for b in bs:
        for d in ds[:-1]:
            if act[(1, b, d)] == 1 and act[(1, b, d + 1)] == 0:
                bad.append((b, d))
    return bad
