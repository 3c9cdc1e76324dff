"""Parameter sweeps over experiment specs, producing metric rows with bound gaps."""

from __future__ import annotations

import itertools
import math
from dataclasses import replace

from .bound import AdmissibilityError, theta
from .config import ExperimentSpec
from .core import SensorParams, SystemConfig
from .policies import make_policy
from .scheduling import msur_to_k0
from .simulator import run_experiment

# policies that ignore the simultaneous-update limit and always run with k0 = K
UNCONSTRAINED = {"cn", "no", "ebsi-opt", "oft", "always", "never"}


def sweep_points(spec: ExperimentSpec) -> list[dict[str, float]]:
    if not spec.sweep:
        return [{}]
    names = [a.param for a in spec.sweep]
    return [dict(zip(names, combo)) for combo in itertools.product(*(a.values for a in spec.sweep))]


def _apply(sensor: SensorParams, point: dict) -> SensorParams:
    changes = {}
    if "lambda" in point:
        changes["energy"] = sensor.energy.with_param(point["lambda"])
    if "eta" in point:
        changes["request_prob"] = point["eta"]
    if "xi" in point:
        changes["channel_success"] = point["xi"]
    return sensor.replace(**changes) if changes else sensor


def config_at(spec: ExperimentSpec, point: dict) -> SystemConfig:
    base = spec.system
    sensors = tuple(_apply(s, point) for s in base.sensors)
    msur = point.get("msur", spec.msur)
    k0 = msur_to_k0(msur, len(sensors)) if msur is not None else base.k0
    return replace(base, sensors=sensors, k0=k0)


def system_theta(config: SystemConfig) -> float | None:
    """Per-sensor average of the weighted lower bounds (None if any sensor is inadmissible)."""
    try:
        vals = [s.weight * theta(s.lam, s.request_prob, s.channel_success, s.max_aocsi) for s in config.sensors]
    except AdmissibilityError:
        return None
    return math.fsum(vals) / len(vals)


def _mean(xs) -> float:
    xs = list(xs)
    return math.fsum(xs) / len(xs)


def run_spec(spec: ExperimentSpec, episodes=None, horizon=None, seed=None, workers=None, progress=None) -> list[dict]:
    """Run every (sweep point, policy) pair and return one metrics row each."""
    episodes = spec.system.episodes if episodes is None else episodes
    horizon = spec.system.horizon if horizon is None else horizon
    seed = spec.system.seed if seed is None else seed
    workers = spec.workers if workers is None else workers
    rows = []
    for point in sweep_points(spec):
        cfg = replace(config_at(spec, point), seed=seed, episodes=episodes, horizon=horizon)
        th = system_theta(cfg)
        K = cfg.num_sensors
        for name in spec.policies:
            run_cfg = replace(cfg, k0=K) if name in UNCONSTRAINED else cfg
            pol = make_policy(name, **spec.options.get(name, {}))
            res = run_experiment(run_cfg, [pol], workers=workers)[pol.display]
            mean, se = res.mean, res.se
            row = {
                "policy": name,
                "lambda": _mean(s.energy.param for s in cfg.sensors),
                "eta": _mean(s.request_prob for s in cfg.sensors),
                "xi": _mean(s.channel_success for s in cfg.sensors),
                "k0_ratio": run_cfg.k0 / K,
                "mean_cost": mean,
                "se": se,
                "episodes": episodes,
                "horizon": horizon,
                "seed": seed,
                "theta": th if th is not None else "",
                "gap_add": mean - th if th is not None else "",
                "gap_mul": mean / th - 1.0 if th is not None else "",
            }
            rows.append(row)
            if progress is not None:
                progress(row)
    return rows
