"""Monte-Carlo evaluation of update policies on the slotted energy-harvesting model.

Episodes are simulated in blocks, vectorised over (episode, sensor) lanes. Every
(episode, sensor, stream) triple owns an independent counter-based stream, so
results do not depend on block size or worker count, and all policies see the
same requests, arrivals and channel draws (common random numbers).
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .cn import advance_trackers
from .core import (
    STREAM_CHANNEL,
    STREAM_ENERGY,
    STREAM_REQUEST,
    STREAM_SCHEDULE,
    ParameterError,
    SystemConfig,
    episode_seed,
    substream,
)
from .dynamics import energy_inverse_cdf, step_physical
from .policies import Policy, SensorArrays, SlotView

CHUNK = 1024
BLOCK_EPISODES = 50


class ConstraintViolation(RuntimeError):
    """A policy commanded more sensors than the simultaneous-update limit."""


@dataclass
class EpisodeMetrics:
    total_cost: float
    slots: int
    sensor_cost: np.ndarray  # per-sensor mean on-demand AoCSI per slot
    commands: np.ndarray
    transmissions: np.ndarray
    successes: np.ndarray
    initial_battery: np.ndarray
    energy_in: np.ndarray  # arrivals before battery clipping
    overflow: np.ndarray
    final_battery: np.ndarray

    @property
    def average_cost(self) -> float:
        """Time-average cost per sensor."""
        return self.total_cost / (self.slots * len(self.sensor_cost))


@dataclass
class ExperimentResult:
    policy: str
    costs: np.ndarray  # per-episode average cost
    metrics: list[EpisodeMetrics]

    @property
    def mean(self) -> float:
        return math.fsum(self.costs) / len(self.costs)

    @property
    def se(self) -> float:
        n = len(self.costs)
        if n < 2:
            return float("nan")
        return float(np.std(self.costs, ddof=1) / math.sqrt(n))


def paired_difference(a: ExperimentResult, b: ExperimentResult) -> tuple[float, float]:
    """Mean and standard error of the per-episode difference a - b (same seeds)."""
    if len(a.costs) != len(b.costs):
        raise ValueError("results cover different episode sets")
    diff = a.costs - b.costs
    n = len(diff)
    se = float(np.std(diff, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return math.fsum(diff) / n, se


class _Streams:
    """Chunked uniforms for one block of episodes."""

    def __init__(self, ep_seeds: Sequence[int], num_sensors: int, schedule: bool):
        kinds = [STREAM_REQUEST, STREAM_ENERGY, STREAM_CHANNEL] + ([STREAM_SCHEDULE] if schedule else [])
        self.kinds = kinds
        self.gens = [[[substream(s, k, kind) for kind in kinds] for k in range(num_sensors)] for s in ep_seeds]
        self.shape = (len(ep_seeds), num_sensors)

    def next(self, m: int) -> list[np.ndarray]:
        E, K = self.shape
        out = [np.empty((m, E, K)) for _ in self.kinds]
        for e in range(E):
            for k in range(K):
                for i, g in enumerate(self.gens[e][k]):
                    out[i][:, e, k] = g.random(m)
        return out


def _simulate_block(config: SystemConfig, policy: Policy, horizon: int, ep_seeds: Sequence[int]) -> list[EpisodeMetrics]:
    E, K = len(ep_seeds), config.num_sensors
    sa = SensorArrays.from_config(config)
    runner = policy.bind(config, sa, (E, K))
    streams = _Streams(ep_seeds, K, runner.needs_schedule)
    draws = [energy_inverse_cdf(s.energy.clipped_pmf(s.battery_capacity)) for s in config.sensors]

    battery = np.full((E, K), config.initial_battery, dtype=np.int64)
    aocsi = np.ones((E, K), dtype=np.int64)
    b_hat = np.zeros((E, K), dtype=np.int64)
    d = np.zeros((E, K))
    cost = np.zeros((E, K))
    n_cmd = np.zeros((E, K), dtype=np.int64)
    n_tx = np.zeros((E, K), dtype=np.int64)
    n_ok = np.zeros((E, K), dtype=np.int64)
    e_in = np.zeros((E, K), dtype=np.int64)
    spill = np.zeros((E, K), dtype=np.int64)
    t = 0
    while t < horizon:
        m = min(CHUNK, horizon - t)
        u = streams.next(m)
        u_req, u_energy, u_chan = u[0], u[1], u[2]
        u_sched = u[3] if runner.needs_schedule else None
        req = u_req < sa.eta
        energy = np.empty((m, E, K), dtype=np.int64)
        for k in range(K):
            energy[:, :, k] = draws[k](u_energy[:, :, k])
        for j in range(m):
            r = req[j]
            view = SlotView(t + j, r, battery, aocsi, b_hat, d, None if u_sched is None else u_sched[j], config.k0)
            act = np.asarray(runner.decide(view), dtype=bool)
            if config.k0 < K and (act.sum(axis=1) > config.k0).any():
                raise ConstraintViolation(f"policy {policy.display!r} exceeded k0={config.k0} at slot {t + j}")
            reported = battery
            battery, new_aocsi, sent, ok, over = step_physical(battery, aocsi, act, u_chan[j], energy[j], sa.xi, sa.capacity)
            b_hat, _, d = advance_trackers(b_hat, aocsi, d, act, ok, reported, sa.xi, sa.lam, sa.p1)
            aocsi = new_aocsi
            cost += np.where(r, sa.alpha * np.minimum(aocsi, sa.max_aocsi), 0.0)
            runner.observe(act, ok, reported)
            n_cmd += act
            n_tx += sent
            n_ok += ok
            e_in += energy[j]
            spill += over
        t += m

    out = []
    for e in range(E):
        out.append(
            EpisodeMetrics(
                total_cost=math.fsum(cost[e]),
                slots=horizon,
                sensor_cost=cost[e] / horizon,
                commands=n_cmd[e].copy(),
                transmissions=n_tx[e].copy(),
                successes=n_ok[e].copy(),
                initial_battery=np.full(K, config.initial_battery, dtype=np.int64),
                energy_in=e_in[e].copy(),
                overflow=spill[e].copy(),
                final_battery=battery[e].copy(),
            )
        )
    return out


def run_episode(config: SystemConfig, policy: Policy, horizon: int | None = None, ep_seed: int | None = None) -> EpisodeMetrics:
    horizon = config.horizon if horizon is None else horizon
    ep_seed = episode_seed(config.seed, 0) if ep_seed is None else ep_seed
    return _simulate_block(config, policy, horizon, [ep_seed])[0]


def _run_block(args):
    return _simulate_block(*args)


def run_experiment(
    config: SystemConfig,
    policies: Iterable[Policy],
    episodes: int | None = None,
    horizon: int | None = None,
    workers: int = 1,
    block_size: int = BLOCK_EPISODES,
) -> dict[str, ExperimentResult]:
    """Evaluate each policy on the same episode seeds; returns results keyed by display name."""
    policies = list(policies)
    if not policies:
        raise ParameterError("at least one policy is required")
    names = [p.display for p in policies]
    if len(set(names)) != len(names):
        raise ParameterError("policy display names must be unique")
    episodes = config.episodes if episodes is None else episodes
    horizon = config.horizon if horizon is None else horizon
    if episodes < 1 or horizon < 1:
        raise ParameterError("episodes and horizon must be positive")
    seeds = [episode_seed(config.seed, ep) for ep in range(episodes)]
    blocks = [seeds[i : i + block_size] for i in range(0, episodes, block_size)]

    results = {}
    for pol in policies:
        pol.prepare(config)
        tasks = [(config, pol, horizon, blk) for blk in blocks]
        if workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                parts = list(ex.map(_run_block, tasks))
        else:
            parts = [_run_block(tk) for tk in tasks]
        metrics = [m for part in parts for m in part]
        costs = np.array([m.average_cost for m in metrics])
        results[pol.display] = ExperimentResult(pol.display, costs, metrics)
    return results


METRIC_COLUMNS = (
    "policy", "lambda", "eta", "xi", "k0_ratio", "mean_cost", "se", "episodes", "horizon", "seed",
    "theta", "gap_add", "gap_mul",
)


def format_float(x: float) -> str:
    return format(x, ".9g")


def write_metrics_csv(path_or_file, rows: Sequence[dict]) -> None:
    """Write metric rows with the fixed column order; floats printed with 9 significant digits."""

    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, float) else v for v in (row.get(c, "") for c in METRIC_COLUMNS)])

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            emit(fh)
