"""Status-update control for energy-harvesting sensors with partial battery information."""

from .bound import theta
from .cn import CnContext, InferredPbsi, cn_decide, delta_v, update_inferred_pbsi
from .core import EnergyModel, SensorParams, SystemConfig
from .policies import POLICY_NAMES, make_policy
from .simulator import run_episode, run_experiment

__version__ = "0.1.0"

__all__ = [
    "CnContext",
    "EnergyModel",
    "InferredPbsi",
    "POLICY_NAMES",
    "SensorParams",
    "SystemConfig",
    "cn_decide",
    "delta_v",
    "make_policy",
    "run_episode",
    "run_experiment",
    "theta",
    "update_inferred_pbsi",
]
