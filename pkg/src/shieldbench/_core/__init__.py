"""Numeric kernel backend selection.

The compiled extension is preferred when present; set SHIELDBENCH_BACKEND
to "python" or "compiled" to force one (``compiled`` raises if the
extension failed to build).
"""

import os

from . import _numcore

_choice = os.environ.get("SHIELDBENCH_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "compiled", "python"):
    raise RuntimeError(f"SHIELDBENCH_BACKEND must be auto, compiled or python, got {_choice!r}")

if _choice == "python":
    _impl = _numcore
else:
    try:
        from . import _fastcore as _impl
    except ImportError:
        if _choice == "compiled":
            raise RuntimeError("compiled backend requested but the extension is not built")
        _impl = _numcore

BACKEND_NAME = _impl.BACKEND_NAME

segseg_distance = _impl.segseg_distance
capsule_gap = _impl.capsule_gap
capsule_gaps_pairwise = _impl.capsule_gaps_pairwise
fk_transforms = _impl.fk_transforms
fk_world_capsules = _impl.fk_world_capsules
first_collision_sample = _impl.first_collision_sample
verify_capsule_sweep = _impl.verify_capsule_sweep
min_capsule_gap_pair = _impl.min_capsule_gap_pair

__all__ = [
    "BACKEND_NAME",
    "segseg_distance",
    "capsule_gap",
    "capsule_gaps_pairwise",
    "fk_transforms",
    "fk_world_capsules",
    "first_collision_sample",
    "verify_capsule_sweep",
    "min_capsule_gap_pair",
]
