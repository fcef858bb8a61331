"""Exception types shared across the package."""


class GmsfemError(Exception):
    """Base class for all package errors."""


class ConfigurationError(GmsfemError, ValueError):
    """Invalid combination of user-facing parameters."""


class DataError(GmsfemError, ValueError):
    """Input data (e.g. a media raster) violates a precondition."""


class InternalError(GmsfemError, RuntimeError):
    """A numerical invariant that should always hold was violated."""


class InstabilityError(GmsfemError, FloatingPointError):
    """Time stepping produced non-finite values."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state detected at step {step}")
