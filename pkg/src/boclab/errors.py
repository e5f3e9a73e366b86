"""Exception hierarchy shared across boclab modules.

The CLI maps these onto its exit-code contract: input problems exit 2,
numerical failures exit 1, violated internal invariants exit 3.
"""


class BoclabError(Exception):
    """Base class for all boclab errors."""


class InputError(BoclabError):
    """Invalid user-supplied argument, config, or file."""


class DimensionError(InputError):
    """Dimension mismatch or invalid dimension."""


class SingularMatrixError(BoclabError):
    """A matrix that must be invertible is singular (or below the floor)."""


class NotPositiveDefiniteError(BoclabError):
    """A covariance that must be positive definite is not."""


class QuadratureError(BoclabError):
    """Numerical inversion failed to reach the requested tolerance."""

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class NonConvergenceError(BoclabError):
    """Iterative solver exhausted its budget without converging."""


class WidthError(InputError):
    """Hidden width too small to represent the requested rule."""


class InvariantViolation(BoclabError):
    """An internal consistency check failed; indicates a bug."""
