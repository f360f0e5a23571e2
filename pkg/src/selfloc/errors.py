"""Exception hierarchy shared by all selfloc modules."""


class SelflocError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(SelflocError):
    """An argument violates a documented precondition (non-finite, non-unit, ...)."""


class InsufficientDataError(SelflocError):
    """Not enough samples / steps / snapshots to run the requested operation."""


class DegenerateOrientationError(SelflocError):
    """Orientation is in a gimbal-degenerate configuration; heading undefined."""


class DegenerateGeometryError(SelflocError):
    """AP geometry is collinear or otherwise too ill-conditioned to solve."""


class SingularInnovationError(SelflocError):
    """The innovation covariance of a filter update is not invertible."""


class DivergenceError(SelflocError):
    """Gradient descent produced a non-finite cost.

    Carries the last parameter vector that still evaluated to a finite cost
    so callers can recover or report it.
    """

    def __init__(self, message: str, last_params=None):
        super().__init__(message)
        self.last_params = last_params


class ScenarioError(SelflocError):
    """A scenario file failed to parse or failed validation."""
