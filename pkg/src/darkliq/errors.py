"""Exception hierarchy shared across the package."""


class DarkliqError(Exception):
    """Base class for all package errors."""


class ValidationError(DarkliqError):
    """Market parameters violate a standing assumption."""

    def __init__(self, message, field=None, witness=None):
        super().__init__(message)
        self.field = field
        self.witness = witness


class NonSymmetricError(ValidationError):
    pass


class NotPositiveDefiniteError(ValidationError):
    pass


class NotNonnegativeDefiniteError(ValidationError):
    pass


class NegativeScalarError(ValidationError):
    pass


class PenaltyTooSmallError(DarkliqError):
    """Penalty l does not exceed the threshold l0."""


class AtSingularityError(DarkliqError):
    """Principal value function requested at or beyond the terminal time."""


class PositivityLostError(DarkliqError):
    """An integration step produced a matrix that is not positive definite."""


class StepFloorReachedError(DarkliqError):
    """Step halving hit the floor without restoring positivity."""


class LadderExhaustedError(DarkliqError):
    """Penalty ladder did not converge within the allowed number of rungs."""


class OutOfGridRangeError(DarkliqError):
    """Query time lies outside the stored grid."""


class NonFiniteStateError(DarkliqError):
    """Simulated state stopped being finite."""


class IndexOutOfRangeError(DarkliqError):
    """Asset index outside [0, n)."""


class HypothesisViolatedError(DarkliqError):
    """Supplied comparison spec fails the ordering premises."""


class InputNotSPDError(DarkliqError):
    """Matrix argument is not symmetric positive definite."""


class NumericFailureError(DarkliqError):
    """A solver produced output violating its certified bounds."""


class ConfigError(DarkliqError):
    """Malformed run configuration."""
