"""
Exception hierarchy shared by every module.
"""


class GatedPGError(Exception):
    """Base class for all library errors."""


class InvalidInputError(GatedPGError, ValueError):
    """Rejected input: non-finite values, out-of-range indices, bad domains."""


class DegeneratePairError(InvalidInputError):
    """A pairwise quantity was requested for a single arm."""


class UnsupportedError(InvalidInputError):
    """The operation is only defined for a narrower class of inputs."""


class InsufficientDataError(InvalidInputError):
    """Too few points to fit."""


class PreconditionError(InvalidInputError):
    """A convergence precondition does not hold for the given instance."""

    def __init__(self, message: str, state: int | None = None):
        super().__init__(message)
        self.state = state


class ConfigError(GatedPGError, ValueError):
    """Invalid run configuration."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class NumericalAbortError(GatedPGError, RuntimeError):
    """Integration produced non-finite values."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step
