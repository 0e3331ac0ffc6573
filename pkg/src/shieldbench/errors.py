"""Exception types shared across the package."""


class ShieldBenchError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(ShieldBenchError):
    """Invalid or inconsistent configuration input."""


class LimitViolationError(ShieldBenchError):
    """A joint position, velocity or acceleration limit was exceeded."""


class UnreachableTargetError(ShieldBenchError):
    """Inverse kinematics failed to converge.

    Carries the best iterate so callers can still make progress toward
    out-of-reach targets.
    """

    def __init__(self, message, best_q=None, best_residual=None):
        super().__init__(message)
        self.best_q = best_q
        self.best_residual = best_residual


class LifecycleError(ShieldBenchError):
    """An operation was called in the wrong object state (e.g. step before reset)."""


class InternalConsistencyError(ShieldBenchError):
    """An invariant the implementation promises to maintain was broken."""
