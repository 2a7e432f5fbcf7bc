"""Exception hierarchy shared by all modules."""


class ABError(Exception):
    """Base class for all errors raised by abdipole."""


class ValidationError(ABError, ValueError):
    """An input violates a documented precondition."""


class SingularFieldError(ValidationError):
    """A field point coincides (within the cutoff) with a source point."""


class AdmissibilityError(ValidationError):
    """A geometric admissibility ratio of the shield model is violated."""

    def __init__(self, message, ratio_name=None, value=None, limit=None):
        super().__init__(message)
        self.ratio_name = ratio_name
        self.value = value
        self.limit = limit


class ConvergenceError(ABError, ArithmeticError):
    """Adaptive quadrature failed to converge.

    ``estimates`` holds the last two refinement estimates.
    """

    def __init__(self, message, estimates=(None, None)):
        super().__init__(f"{message} (last estimates: {estimates[0]!r}, {estimates[1]!r})")
        self.estimates = tuple(estimates)
