"""Domain types, energy-arrival models and random stream plumbing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

PROB_TOL = 1e-12

# stream-type ids used when deriving per-(episode, sensor) substreams
STREAM_REQUEST = 0
STREAM_ENERGY = 1
STREAM_CHANNEL = 2
STREAM_SCHEDULE = 3


class ParameterError(ValueError):
    """Invalid model or configuration parameter."""


@dataclass(frozen=True)
class EnergyModel:
    """Distribution of the energy harvested in one slot.

    ``kind`` is one of ``"bernoulli"`` (``param`` = probability of one unit),
    ``"poisson"`` (``param`` = mean) or ``"table"`` (explicit ``support`` and
    ``probs``).
    """

    kind: str
    param: float = 0.0
    support: tuple[int, ...] = ()
    probs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == "bernoulli":
            if not 0.0 <= self.param <= 1.0:
                raise ParameterError(f"bernoulli p must lie in [0, 1], got {self.param}")
        elif self.kind == "poisson":
            if not self.param > 0.0:
                raise ParameterError(f"poisson mean must be positive, got {self.param}")
        elif self.kind == "table":
            if len(self.support) != len(self.probs) or not self.support:
                raise ParameterError("table support and probs must be non-empty and equally long")
            if any(int(e) != e or e < 0 for e in self.support):
                raise ParameterError("table support must hold nonnegative integers")
            if any(p < 0 for p in self.probs):
                raise ParameterError("table probabilities must be nonnegative")
            if abs(math.fsum(self.probs) - 1.0) > PROB_TOL:
                raise ParameterError("table probabilities must sum to 1")
        else:
            raise ParameterError(f"unknown energy model kind {self.kind!r}")

    @classmethod
    def bernoulli(cls, p: float) -> "EnergyModel":
        return cls("bernoulli", float(p))

    @classmethod
    def poisson(cls, mean: float) -> "EnergyModel":
        return cls("poisson", float(mean))

    @classmethod
    def table(cls, pmf: dict[int, float]) -> "EnergyModel":
        items = sorted(pmf.items())
        return cls("table", 0.0, tuple(int(e) for e, _ in items), tuple(float(p) for _, p in items))

    def with_param(self, value: float) -> "EnergyModel":
        """Same family with a new nominal parameter (used by parameter sweeps)."""
        if self.kind == "table":
            raise ParameterError("table models have no scalar parameter to sweep")
        return replace(self, param=float(value))

    def clipped_pmf(self, capacity: int) -> np.ndarray:
        """pmf of ``min(E, capacity)`` on ``0..capacity``."""
        if capacity < 1:
            raise ParameterError("capacity must be at least 1")
        out = np.zeros(capacity + 1)
        if self.kind == "bernoulli":
            out[0] = 1.0 - self.param
            out[1] += self.param
        elif self.kind == "poisson":
            k = np.arange(capacity)
            out[:capacity] = stats.poisson.pmf(k, self.param)
            # everything at or above the capacity collapses onto it
            out[capacity] = stats.poisson.sf(capacity - 1, self.param)
        else:
            for e, p in zip(self.support, self.probs):
                out[min(e, capacity)] += p
        return out

    def positive_prob(self) -> float:
        """P{E > 0}."""
        if self.kind == "bernoulli":
            return self.param
        if self.kind == "poisson":
            return -math.expm1(-self.param)
        return math.fsum(p for e, p in zip(self.support, self.probs) if e > 0)

    def sample(self, rng: np.random.Generator, size=None):
        return sample_energy(self, rng, size)


def clipped_mean(model: EnergyModel, capacity: int) -> float:
    """Effective arrival rate E[min(E, capacity)]."""
    pmf = model.clipped_pmf(capacity)
    return float(np.dot(np.arange(capacity + 1), pmf))


def clipped_std(model: EnergyModel, capacity: int) -> float:
    """Standard deviation of min(E, capacity)."""
    pmf = model.clipped_pmf(capacity)
    k = np.arange(capacity + 1)
    mean = float(np.dot(k, pmf))
    var = float(np.dot((k - mean) ** 2, pmf))
    return math.sqrt(max(var, 0.0))


def sample_energy(model: EnergyModel, rng: np.random.Generator, size=None):
    """Draw unclipped arrivals; clipping happens in the battery dynamics."""
    if model.kind == "bernoulli":
        return (rng.random(size) < model.param).astype(np.int64)
    if model.kind == "poisson":
        return rng.poisson(model.param, size).astype(np.int64)
    idx = rng.choice(len(model.support), size=size, p=np.asarray(model.probs))
    return np.asarray(model.support, dtype=np.int64)[idx]


@dataclass(frozen=True)
class SensorParams:
    battery_capacity: int = 15
    max_aocsi: int = 48
    weight: float = 1.0
    request_prob: float = 0.7
    channel_success: float = 1.0
    energy: EnergyModel = field(default_factory=lambda: EnergyModel.bernoulli(0.12))

    def __post_init__(self):
        if int(self.battery_capacity) != self.battery_capacity or self.battery_capacity < 1:
            raise ParameterError("battery_capacity must be an integer >= 1")
        if int(self.max_aocsi) != self.max_aocsi or self.max_aocsi < 2:
            raise ParameterError("max_aocsi must be an integer >= 2")
        if self.weight < 0:
            raise ParameterError("weight must be nonnegative")
        if not 0.0 < self.request_prob <= 1.0:
            raise ParameterError("request_prob must lie in (0, 1]")
        if not 0.0 < self.channel_success <= 1.0:
            raise ParameterError("channel_success must lie in (0, 1]")
        if not isinstance(self.energy, EnergyModel):
            raise ParameterError("energy must be an EnergyModel")

    @property
    def lam(self) -> float:
        """Clipped mean arrival rate."""
        return clipped_mean(self.energy, self.battery_capacity)

    @property
    def sigma(self) -> float:
        return clipped_std(self.energy, self.battery_capacity)

    @property
    def p1(self) -> float:
        return self.energy.positive_prob()

    def replace(self, **changes) -> "SensorParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class SystemConfig:
    sensors: tuple[SensorParams, ...]
    k0: int = 1
    horizon: int = 10_000
    episodes: int = 100
    seed: int = 0
    initial_battery: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        if not self.sensors:
            raise ParameterError("at least one sensor is required")
        if not 1 <= self.k0 <= len(self.sensors):
            raise ParameterError(f"k0 must lie in [1, {len(self.sensors)}], got {self.k0}")
        if self.horizon < 1 or self.episodes < 1:
            raise ParameterError("horizon and episodes must be positive")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")
        cap = min(s.battery_capacity for s in self.sensors)
        if not 0 <= self.initial_battery <= cap:
            raise ParameterError("initial_battery must lie within every battery capacity")

    @classmethod
    def single(cls, params: SensorParams, **kw) -> "SystemConfig":
        return cls(sensors=(params,), k0=1, **kw)

    @property
    def num_sensors(self) -> int:
        return len(self.sensors)


def episode_seed(root_seed: int, episode: int) -> int:
    """Seed of one episode, derived from the experiment root seed."""
    ss = np.random.SeedSequence(entropy=root_seed, spawn_key=(episode,))
    return int(ss.generate_state(2, np.uint64)[0])


def substream(ep_seed: int, sensor: int, stream: int) -> np.random.Generator:
    """Counter-based generator for one (episode, sensor, stream-type) triple."""
    ss = np.random.SeedSequence(entropy=ep_seed, spawn_key=(sensor, stream))
    return np.random.Generator(np.random.Philox(ss))
