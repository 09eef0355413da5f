"""Exception hierarchy shared across the package."""


class SplatidError(Exception):
    """Base class for all package errors."""


class DomainError(SplatidError, ValueError):
    """An argument is outside the domain an operation accepts."""


class ShapeError(DomainError):
    """Array dimensions are inconsistent with the configured bases."""


class UnsupportedError(DomainError):
    """A configuration the package deliberately does not support."""


class DegenerateBasisError(DomainError):
    """A Gram matrix has a zero diagonal entry (collapsed basis)."""


class DegenerateGeometryError(DomainError):
    """Coincident points or otherwise unusable geometry."""


class ConfigError(SplatidError, ValueError):
    """A recipe, scenario, or CLI configuration does not validate."""


class NumericError(SplatidError, ArithmeticError):
    """A numerical operation failed despite valid inputs."""


class OptimizationError(NumericError):
    """An iterative fit diverged; carries the loss trace for inspection."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class IllPosedError(SplatidError):
    """A statistical check was requested on a design where it is undefined."""
