"""Experiment specification files (YAML) with line-precise validation errors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

from .core import EnergyModel, ParameterError, SensorParams, SystemConfig
from .policies import POLICY_NAMES

SWEEP_PARAMS = ("lambda", "eta", "xi", "msur")
SENSOR_KEYS = {"count", "energy", "request_prob", "channel_success", "battery_capacity", "max_aocsi", "weight"}
TOP_KEYS = {"scenario", "system", "sweep", "policies", "options", "run", "output"}
SYSTEM_KEYS = {"defaults", "sensors", "k0", "msur", "initial_battery", "shuffle_seed"}
RUN_KEYS = {"episodes", "horizon", "seed", "workers"}


class SpecError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = f"{source or '<spec>'}:{line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


@dataclass(frozen=True)
class SweepAxis:
    param: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: str
    system: SystemConfig
    policies: tuple[str, ...]
    sweep: tuple[SweepAxis, ...] = ()
    options: dict = field(default_factory=dict, compare=False, hash=False)
    output: str | None = None
    msur: float | None = None
    workers: int = 1


class _Reader:
    def __init__(self, source: str | None):
        self.source = source
        self._ctor = yaml.SafeLoader("")

    def err(self, msg, node=None):
        return SpecError(msg, None if node is None else node.start_mark.line + 1, self.source)

    def value(self, node):
        return self._ctor.construct_object(node, deep=True)

    def mapping(self, node, allowed: set[str], what: str) -> dict[str, Any]:
        if not isinstance(node, yaml.MappingNode):
            raise self.err(f"{what} must be a mapping", node)
        out = {}
        for k, v in node.value:
            key = self.value(k)
            if key not in allowed:
                raise self.err(f"unknown key {key!r} in {what}; allowed: {', '.join(sorted(allowed))}", k)
            if key in out:
                raise self.err(f"duplicate key {key!r} in {what}", k)
            out[key] = v
        return out

    def seq(self, node, what: str) -> list:
        if not isinstance(node, yaml.SequenceNode):
            raise self.err(f"{what} must be a list", node)
        return list(node.value)

    def number(self, node, what: str, integer=False, lo=None, hi=None):
        v = self.value(node)
        ok = isinstance(v, int) if integer else isinstance(v, (int, float))
        if isinstance(v, bool) or not ok:
            raise self.err(f"{what} must be {'an integer' if integer else 'a number'}, got {v!r}", node)
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            raise self.err(f"{what}={v} outside [{lo}, {hi}]", node)
        return v

    def string(self, node, what: str) -> str:
        v = self.value(node)
        if not isinstance(v, str):
            raise self.err(f"{what} must be a string", node)
        return v


def _energy(rd: _Reader, node) -> EnergyModel:
    m = rd.mapping(node, {"kind", "param", "pmf"}, "energy")
    if "kind" not in m:
        raise rd.err("energy needs a 'kind'", node)
    kind = rd.string(m["kind"], "energy.kind")
    try:
        if kind == "table":
            if "pmf" not in m:
                raise rd.err("table energy needs a 'pmf' mapping", node)
            pmf = rd.value(m["pmf"])
            if not isinstance(pmf, dict):
                raise rd.err("energy.pmf must map integer units to probabilities", m["pmf"])
            return EnergyModel.table({int(k): float(v) for k, v in pmf.items()})
        if kind not in ("bernoulli", "poisson"):
            raise rd.err(f"unknown energy kind {kind!r}", m["kind"])
        if "param" not in m:
            raise rd.err(f"{kind} energy needs a 'param'", node)
        return EnergyModel(kind, float(rd.number(m["param"], "energy.param")))
    except ParameterError as exc:
        raise rd.err(str(exc), node) from None


def _sensor_fields(rd: _Reader, m: dict) -> dict:
    out = {}
    for key, node in m.items():
        if key == "count":
            continue
        if key == "energy":
            out["energy"] = _energy(rd, node)
        elif key in ("battery_capacity", "max_aocsi"):
            out[key] = rd.number(node, key, integer=True, lo=1)
        else:
            out[key] = float(rd.number(node, key))
    return out


def _system(rd: _Reader, node) -> tuple[SystemConfig, float | None]:
    m = rd.mapping(node, SYSTEM_KEYS, "system")
    defaults = _sensor_fields(rd, rd.mapping(m["defaults"], SENSOR_KEYS - {"count"}, "system.defaults")) if "defaults" in m else {}
    sensors: list[SensorParams] = []
    groups = rd.seq(m["sensors"], "system.sensors") if "sensors" in m else []
    try:
        if not groups:
            sensors.append(SensorParams(**defaults))
        for g in groups:
            gm = rd.mapping(g, SENSOR_KEYS, "sensor group")
            count = rd.number(gm["count"], "count", integer=True, lo=1) if "count" in gm else 1
            fields = {**defaults, **_sensor_fields(rd, gm)}
            try:
                sensors.extend([SensorParams(**fields)] * count)
            except ParameterError as exc:
                raise rd.err(str(exc), g) from None
    except ParameterError as exc:
        raise rd.err(str(exc), node) from None
    if "shuffle_seed" in m:
        # spread the groups over sensor ids (ids matter for tie-breaking)
        seed = rd.number(m["shuffle_seed"], "shuffle_seed", integer=True, lo=0)
        perm = np.random.default_rng(seed).permutation(len(sensors))
        sensors = [sensors[i] for i in perm]
    if "k0" in m and "msur" in m:
        raise rd.err("give either k0 or msur, not both", m["msur"])
    msur = None
    k0 = len(sensors)
    if "k0" in m:
        k0 = rd.number(m["k0"], "k0", integer=True, lo=1, hi=len(sensors))
    if "msur" in m:
        msur = float(rd.number(m["msur"], "msur", lo=0.0, hi=1.0))
    init = rd.number(m["initial_battery"], "initial_battery", integer=True, lo=0) if "initial_battery" in m else 0
    try:
        cfg = SystemConfig(sensors=tuple(sensors), k0=k0, initial_battery=init)
    except ParameterError as exc:
        raise rd.err(str(exc), node) from None
    return cfg, msur


def parse_spec(text: str, source: str | None = None) -> ExperimentSpec:
    rd = _Reader(source)
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise SpecError(f"invalid YAML: {getattr(exc, 'problem', exc)}", None if mark is None else mark.line + 1, source) from None
    if root is None:
        raise SpecError("empty specification", None, source)
    top = rd.mapping(root, TOP_KEYS, "specification")
    for need in ("system", "policies"):
        if need not in top:
            raise rd.err(f"missing required key {need!r}", root)

    scenario = rd.string(top["scenario"], "scenario") if "scenario" in top else "experiment"
    system, msur = _system(rd, top["system"])

    pol_nodes = rd.seq(top["policies"], "policies")
    if not pol_nodes:
        raise rd.err("policy list must not be empty", top["policies"])
    policies = []
    for pn in pol_nodes:
        name = rd.string(pn, "policy name")
        if name not in POLICY_NAMES:
            raise rd.err(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}", pn)
        if name in policies:
            raise rd.err(f"policy {name!r} listed twice", pn)
        policies.append(name)

    sweep = []
    if "sweep" in top:
        for ax in rd.seq(top["sweep"], "sweep"):
            am = rd.mapping(ax, {"param", "values"}, "sweep axis")
            if "param" not in am or "values" not in am:
                raise rd.err("sweep axis needs 'param' and 'values'", ax)
            param = rd.string(am["param"], "sweep.param")
            if param not in SWEEP_PARAMS:
                raise rd.err(f"unknown sweep parameter {param!r}; choose from {', '.join(SWEEP_PARAMS)}", am["param"])
            if any(a.param == param for a in sweep):
                raise rd.err(f"sweep parameter {param!r} given twice", am["param"])
            vals = []
            for vn in rd.seq(am["values"], "sweep.values"):
                v = float(rd.number(vn, f"{param} value"))
                bounds = {"lambda": (0.0, None), "eta": (0.0, 1.0), "xi": (0.0, 1.0), "msur": (0.0, 1.0)}[param]
                if v <= bounds[0] or (bounds[1] is not None and v > bounds[1]):
                    raise rd.err(f"{param} value {v} is not valid", vn)
                vals.append(v)
            if not vals:
                raise rd.err("sweep values must not be empty", am["values"])
            sweep.append(SweepAxis(param, tuple(vals)))

    options = {}
    if "options" in top:
        om = rd.mapping(top["options"], set(POLICY_NAMES), "options")
        for name, node in om.items():
            val = rd.value(node)
            if not isinstance(val, dict):
                raise rd.err(f"options for {name!r} must be a mapping", node)
            options[name] = val

    run = rd.mapping(top["run"], RUN_KEYS, "run") if "run" in top else {}
    episodes = rd.number(run["episodes"], "episodes", integer=True, lo=1) if "episodes" in run else 100
    horizon = rd.number(run["horizon"], "horizon", integer=True, lo=1) if "horizon" in run else 10_000
    seed = rd.number(run["seed"], "seed", integer=True, lo=0) if "seed" in run else 0
    workers = rd.number(run["workers"], "workers", integer=True, lo=1) if "workers" in run else 1
    output = rd.string(top["output"], "output") if "output" in top else None

    system = SystemConfig(system.sensors, system.k0, horizon, episodes, seed, system.initial_battery)
    return ExperimentSpec(scenario, system, tuple(policies), tuple(sweep), options, output, msur, workers)


def load_spec(path: str) -> ExperimentSpec:
    with open(path) as fh:
        return parse_spec(fh.read(), path)
