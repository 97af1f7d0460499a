"""Exception types raised across the package."""


class MetacondError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(MetacondError, ValueError):
    """A matrix failed the Cholesky positive-definiteness gate."""


class DomainError(MetacondError, ValueError):
    """An argument lies outside the domain of the function."""


class DegenerateConditioning(MetacondError):
    """Every mixture component assigns zero density to the conditioning point."""


class SingularComponent(MetacondError):
    """A mixture component covariance lost positive definiteness during EM."""


class EmptyComponent(MetacondError):
    """A mixture component received (numerically) zero responsibility."""


class NonFiniteObjective(MetacondError):
    """The copula log-likelihood became NaN or infinite during fitting."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class UnsupportedShape(MetacondError, ValueError):
    """The requested operation does not support the given dimensions."""


class InsufficientAcceptance(MetacondError):
    """A rejection sampler hit its draw cap before collecting enough samples."""


class FormatError(MetacondError, ValueError):
    """A serialized model has an unknown or malformed format."""


class FitError(MetacondError):
    """Fitting a meta model failed; ``column`` and ``phase`` locate the failure."""

    def __init__(self, message, column=None, phase=None):
        super().__init__(message)
        self.column = column
        self.phase = phase
