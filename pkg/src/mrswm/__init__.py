"""Moment-closure solvers for magnetic rotating shallow water flow."""

from ._alloc import tune_allocator
from .closure import BasisSet, ClosureTensors, build_tensors, eval_profile, project_profile
from .errors import ConfigError, DryStateError, HyperbolicityError, SolverError

__version__ = "0.1.0"

tune_allocator()

__all__ = [
    "BasisSet",
    "ClosureTensors",
    "ConfigError",
    "DryStateError",
    "HyperbolicityError",
    "SolverError",
    "build_tensors",
    "eval_profile",
    "project_profile",
    "__version__",
]
