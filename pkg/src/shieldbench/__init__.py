"""shieldbench: safe human-robot collaboration benchmarks.

Kinematic robot simulation with a set-based safety shield, replayed human
motion, scripted experts, imitation-reward wrappers and an evaluation
harness.
"""

from ._core import BACKEND_NAME
from .errors import (
    ConfigurationError,
    InternalConsistencyError,
    LifecycleError,
    LimitViolationError,
    ShieldBenchError,
    UnreachableTargetError,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "ShieldBenchError",
    "ConfigurationError",
    "LimitViolationError",
    "UnreachableTargetError",
    "LifecycleError",
    "InternalConsistencyError",
    "__version__",
]
