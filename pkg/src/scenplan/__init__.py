"""Chance-constrained motion planning with clustered scenario samples."""

from . import clustering, geometry, milp, planner, prediction, sampling_bounds, validation
from .geometry import OvState, Polytope
from .planner import PlanResult, plan
from .prediction import GeneratorSpec, PredictionSet
from .sampling_bounds import RiskSpec, min_samples

__version__ = "0.1.0"

__all__ = [
    "GeneratorSpec",
    "OvState",
    "PlanResult",
    "Polytope",
    "PredictionSet",
    "RiskSpec",
    "clustering",
    "geometry",
    "milp",
    "min_samples",
    "plan",
    "planner",
    "prediction",
    "sampling_bounds",
    "validation",
]
