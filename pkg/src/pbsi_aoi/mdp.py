"""Finite average-cost MDPs and relative value iteration."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

ROW_SUM_TOL = 1e-9


class MdpValidationError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """Raised when value iteration hits its iteration limit."""

    def __init__(self, message: str, last_span: float, iterations: int):
        super().__init__(message)
        self.last_span = last_span
        self.iterations = iterations


@dataclass
class FiniteMdp:
    """Finite MDP stored as one sparse row per (state, action) pair.

    Pairs are ordered by state, then by increasing action id.
    """

    num_states: int
    pair_state: np.ndarray
    pair_action: np.ndarray
    costs: np.ndarray
    transitions: sparse.csr_matrix
    labels: Sequence | None = field(default=None, repr=False)

    def __post_init__(self):
        self.pair_state = np.asarray(self.pair_state, dtype=np.int64)
        self.pair_action = np.asarray(self.pair_action, dtype=np.int64)
        self.costs = np.asarray(self.costs, dtype=np.float64)
        self.transitions = sparse.csr_matrix(self.transitions, dtype=np.float64)
        self.validate()
        # position of each pair inside its state's action list
        self._starts = np.searchsorted(self.pair_state, np.arange(self.num_states))
        self._pair_pos = np.arange(len(self.pair_state)) - self._starts[self.pair_state]
        self._max_actions = int(self._pair_pos.max()) + 1

    @classmethod
    def from_rows(cls, num_states: int, rows: Iterable[tuple], labels=None) -> "FiniteMdp":
        """Build from ``(state, action, cost, next_states, probs)`` tuples."""
        ps, pa, c, ri, ci, vals = [], [], [], [], [], []
        for k, (s, a, cost, nxt, pr) in enumerate(rows):
            ps.append(s)
            pa.append(a)
            c.append(cost)
            nxt = np.asarray(nxt, dtype=np.int64)
            ri.append(np.full(len(nxt), k, dtype=np.int64))
            ci.append(nxt)
            vals.append(np.asarray(pr, dtype=np.float64))
        n_pairs = len(ps)
        P = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(ri), np.concatenate(ci))),
            shape=(n_pairs, num_states),
        ).tocsr()
        P.sum_duplicates()
        return cls(num_states, np.array(ps), np.array(pa), np.array(c), P, labels)

    def validate(self):
        n = self.num_states
        if n < 1:
            raise MdpValidationError("num_states must be positive")
        m = len(self.pair_state)
        if not (len(self.pair_action) == len(self.costs) == m == self.transitions.shape[0]):
            raise MdpValidationError("pair arrays and transition rows disagree in length")
        if self.transitions.shape[1] != n:
            raise MdpValidationError("transition matrix has the wrong number of columns")
        if m and (self.pair_state.min() < 0 or self.pair_state.max() >= n):
            raise MdpValidationError("pair state index out of range")
        key = self.pair_state * (self.pair_action.max() + 1 if m else 1) + self.pair_action
        if np.any(np.diff(key) <= 0):
            raise MdpValidationError("pairs must be sorted by (state, action) without duplicates")
        if len(np.unique(self.pair_state)) != n:
            raise MdpValidationError("every state needs at least one allowable action")
        if self.transitions.nnz and self.transitions.data.min() < 0:
            raise MdpValidationError("negative transition probability")
        sums = np.asarray(self.transitions.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            k = bad[0]
            raise MdpValidationError(
                f"row (state {self.pair_state[k]}, action {self.pair_action[k]}) sums to {sums[k]!r}"
            )
        if not np.all(np.isfinite(self.costs)):
            raise MdpValidationError("costs must be finite")

    @property
    def num_pairs(self) -> int:
        return len(self.pair_state)

    def actions_of(self, state: int) -> np.ndarray:
        return self.pair_action[self.pair_state == state]

    def q_values(self, h: np.ndarray) -> np.ndarray:
        """Per-pair c(s,a) + sum_s' p(s'|s,a) h(s')."""
        return self.costs + self.transitions @ h

    def _per_state(self, q: np.ndarray) -> np.ndarray:
        table = np.full((self.num_states, self._max_actions), np.inf)
        table[self.pair_state, self._pair_pos] = q
        return table

    def bellman_min(self, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Minimal Q per state and the minimising action (lowest id on ties)."""
        table = self._per_state(self.q_values(h))
        pos = np.argmin(table, axis=1)
        return table[np.arange(self.num_states), pos], self.pair_action[self._starts + pos]

    def policy_pairs(self, policy: np.ndarray) -> np.ndarray:
        """Pair index chosen by a stationary deterministic policy."""
        idx = np.full(self.num_states, -1)
        hit = self.pair_action == np.asarray(policy)[self.pair_state]
        idx[self.pair_state[hit]] = np.flatnonzero(hit)
        if np.any(idx < 0):
            raise MdpValidationError("policy selects an action that is not allowed")
        return idx


@dataclass(frozen=True)
class RviSolution:
    gain: float
    bias: np.ndarray
    policy: np.ndarray
    iterations: int
    final_span: float
    ops_per_iteration: int


def span(x: np.ndarray) -> float:
    return float(np.max(x) - np.min(x))


def relative_value_iteration(
    mdp: FiniteMdp,
    ref_state: int = 0,
    tol: float = 1e-6,
    max_iters: int = 100_000,
    aperiodicity: float = 1.0,
) -> RviSolution:
    """Relative value iteration for average-cost unichain MDPs.

    Iterates ``V <- min_a (c + P h)``, ``h <- V - V(ref)`` until the span of
    successive ``V`` differences drops below ``tol``. ``aperiodicity`` < 1
    applies the transformation ``P -> tau P + (1 - tau) I`` (gain unchanged,
    bias rescaled back) for models whose optimal chains are periodic.
    """
    if not 0 <= ref_state < mdp.num_states:
        raise MdpValidationError(f"ref_state {ref_state} out of range")
    if not 0.0 < aperiodicity <= 1.0:
        raise ValueError("aperiodicity must lie in (0, 1]")
    tau = aperiodicity
    h = np.zeros(mdp.num_states)
    v = np.zeros(mdp.num_states)
    theta = np.inf
    it = 0
    while it < max_iters:
        it += 1
        v_prev = v
        v = mdp._per_state(mdp.costs + tau * (mdp.transitions @ h)).min(axis=1)
        if tau != 1.0:
            v += (1.0 - tau) * h
        theta = span(v - v_prev)
        h = v - v[ref_state]
        if theta < tol:
            break
    else:
        raise ConvergenceError(
            f"relative value iteration did not converge in {max_iters} iterations (span {theta:.3g})",
            theta,
            it,
        )
    gain = float(v[ref_state])
    bias = h * tau
    _, policy = mdp.bellman_min(bias)
    return RviSolution(gain, bias, policy, it, float(theta), int(mdp.transitions.nnz))


def evaluate_policy(mdp: FiniteMdp, policy: np.ndarray, ref_state: int = 0) -> tuple[float, np.ndarray]:
    """Exact gain and bias of a unichain stationary policy (linear solve)."""
    pairs = mdp.policy_pairs(policy)
    P = mdp.transitions[pairs].toarray()
    c = mdp.costs[pairs]
    n = mdp.num_states
    # unknowns: g, h(s) for s != ref, with h(ref) = 0
    A = np.zeros((n, n))
    A[:, 0] = 1.0
    M = np.eye(n) - P
    cols = [s for s in range(n) if s != ref_state]
    A[:, 1:] = M[:, cols]
    x = np.linalg.solve(A, c)
    h = np.zeros(n)
    h[cols] = x[1:]
    return float(x[0]), h


def bellman_residual(mdp: FiniteMdp, gain: float, bias: np.ndarray) -> float:
    v, _ = mdp.bellman_min(bias)
    return float(np.max(np.abs(v - gain - bias)))


@dataclass
class PolicyTable:
    """Tabulated state -> action map produced by an MDP solve."""

    columns: tuple[str, ...]
    states: np.ndarray
    actions: np.ndarray
    gain: float
    bias: np.ndarray
    iterations: int = 0

    def __len__(self):
        return len(self.actions)

    def as_dict(self) -> dict[tuple, int]:
        return {tuple(int(x) for x in s): int(a) for s, a in zip(self.states, self.actions)}

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.columns) + ["action"])
        for s, a in zip(self.states, self.actions):
            w.writerow([int(x) for x in s] + [int(a)])
        return buf.getvalue() if fh is None else ""
