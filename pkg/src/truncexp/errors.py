"""Exception hierarchy shared by every module."""


class TruncExpError(Exception):
    """Base class for all errors raised by truncexp."""


class DomainError(TruncExpError, ValueError):
    """A point lies outside the support of the family."""


class UnsupportedConfigurationError(TruncExpError):
    """No proven bound or algorithm exists for the requested combination."""


class AccuracyError(TruncExpError):
    """A quadrature rule missed its error target.

    The achieved error estimate is kept on ``estimate``.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class CapacityError(TruncExpError):
    """A size guard was exceeded (grid cells, Hessian dimension, ...)."""


class InvalidRadiusError(TruncExpError, ValueError):
    """A ball radius was not strictly positive."""


class NumericalError(TruncExpError):
    """Non-finite values or a failed factorization."""


class AssumptionViolation(TruncExpError):
    """A modelling assumption (minimality, invertibility) does not hold."""


class SchemaError(TruncExpError):
    """Invalid experiment configuration; ``path`` locates the bad field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class FeasibilityWarning(UserWarning):
    """An inner product exceeded the r^T d bound, so Theta is likely infeasible."""


class TuningWarning(UserWarning):
    """MCMC acceptance rate fell outside the recommended band."""
