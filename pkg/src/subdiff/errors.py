"""Exception types shared across the package."""


class SubdiffError(Exception):
    """Base class for all package-specific errors."""


class DomainError(SubdiffError, ValueError):
    """A function argument lies outside the mathematical domain (e.g. t <= 0)."""


class ConfigurationError(SubdiffError, ValueError):
    """Invalid grid, ladder, or run-configuration value."""


class HypothesisError(SubdiffError, ValueError):
    """A structural hypothesis (coercivity, monotonicity, kernel shape) is violated."""


class InputError(SubdiffError, ValueError):
    """Mismatched meshes, grids, or malformed check inputs."""


class ToleranceError(SubdiffError, RuntimeError):
    """A requested tolerance could not be met; carries the achieved error."""

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class StepFailureError(SubdiffError, RuntimeError):
    """Time step failed to converge; carries the partial history computed so far."""

    def __init__(self, message: str, partial_history=None):
        super().__init__(message)
        self.partial_history = partial_history
