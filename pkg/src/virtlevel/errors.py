"""Exception hierarchy. The CLI maps each family to an exit code."""


class VirtLevelError(Exception):
    """Base class for all package errors."""


class DomainError(VirtLevelError, ValueError):
    """Input outside the domain of an operation (CLI exit code 2)."""


class ResolutionError(DomainError):
    """Grid too coarse or region too thin for the requested check."""


class BracketError(DomainError):
    """A bisection bracket does not contain a sign change."""


class InconsistencyError(DomainError):
    """Numbers contradict a verdict that was assumed upstream."""


class ConvergenceError(VirtLevelError, RuntimeError):
    """Iterative method failed (CLI exit code 3)."""

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class ResourceError(VirtLevelError, MemoryError):
    """Requested problem exceeds the declared memory budget (CLI exit code 4)."""
