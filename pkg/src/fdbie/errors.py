"""Exception types raised across the package."""


class FdbieError(Exception):
    """Base class for all package errors."""


class GeometryError(FdbieError):
    """The grid cannot resolve the domain (too coarse, ambiguous crossings)."""


class ConfigError(FdbieError):
    """Invalid parameters or configuration."""


class FieldError(FdbieError):
    """Structurally inconsistent grid field (wrong side, missing values)."""


class SolverError(FdbieError):
    """An iterative or direct solve failed to reach its tolerance."""

    def __init__(self, message, iterations=None, residual=None, trace=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.trace = trace


class OperatorError(FdbieError):
    """Boundary operator precondition violated (e.g. data not in F_#)."""
