"""Capsule primitives and distance queries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _core
from .errors import ConfigurationError


@dataclass(frozen=True)
class Capsule:
    """Line-segment swept sphere. Degenerate a == b gives a ball."""

    endpoint_a: np.ndarray
    endpoint_b: np.ndarray
    radius: float

    def __post_init__(self):
        a = np.asarray(self.endpoint_a, dtype=np.float64).reshape(3)
        b = np.asarray(self.endpoint_b, dtype=np.float64).reshape(3)
        object.__setattr__(self, "endpoint_a", a)
        object.__setattr__(self, "endpoint_b", b)
        object.__setattr__(self, "radius", float(self.radius))
        if not (self.radius > 0.0):
            raise ConfigurationError(f"capsule radius must be positive, got {self.radius}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ConfigurationError("capsule endpoints must be finite")

    def packed(self) -> np.ndarray:
        """Row [ax, ay, az, bx, by, bz, r] as consumed by the core kernels."""
        out = np.empty(7)
        out[0:3] = self.endpoint_a
        out[3:6] = self.endpoint_b
        out[6] = self.radius
        return out

    def translated(self, offset) -> "Capsule":
        off = np.asarray(offset, dtype=np.float64).reshape(3)
        return Capsule(self.endpoint_a + off, self.endpoint_b + off, self.radius)

    def inflated(self, extra: float) -> "Capsule":
        return Capsule(self.endpoint_a, self.endpoint_b, self.radius + float(extra))


def pack_capsules(capsules) -> np.ndarray:
    """Stack Capsule objects into an (N,7) float64 array."""
    if len(capsules) == 0:
        return np.zeros((0, 7))
    return np.stack([c.packed() for c in capsules])


def unpack_capsules(rows) -> list:
    rows = np.asarray(rows, dtype=np.float64).reshape(-1, 7)
    return [Capsule(r[0:3], r[3:6], r[6]) for r in rows]


def segment_distance(p0, p1, q0, q1) -> float:
    """Minimum distance between two 3-D segments."""
    return float(_core.segseg_distance(p0, p1, q0, q1))


def capsule_distance(a: Capsule, b: Capsule) -> float:
    """Signed clearance; negative values give the overlap depth."""
    return float(_core.capsule_gap(a.packed(), b.packed()))
