"""Exception hierarchy shared across the package."""


class DefcureError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DefcureError, ValueError):
    """Parameters and data disagree on dimensions or an option is invalid."""


class NotDefectiveError(DefcureError, ValueError):
    """A cure fraction was requested where the shape parameter is not negative."""

    def __init__(self, message, cause=None, shape=None):
        super().__init__(message)
        self.cause = cause
        self.shape = shape


class NonFiniteParameterError(DefcureError, ArithmeticError):
    """The log link overflowed for some linear predictor."""

    def __init__(self, message, linear_predictor=None):
        super().__init__(message)
        self.linear_predictor = linear_predictor


class NumericInversionError(DefcureError, ArithmeticError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StencilError(DefcureError, ArithmeticError):
    def __init__(self, message, coordinates=None):
        super().__init__(message)
        self.coordinates = coordinates


class BadStartError(DefcureError, ValueError):
    """The log-likelihood is not finite at the requested starting point."""


class NonConvergenceError(DefcureError, RuntimeError):
    """No multistart run reached the convergence criterion.

    ``best`` holds the best :class:`~defcure.estimation.FitResult` found so far
    so callers can still report it.
    """

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics or {}


class GenerationError(DefcureError, ValueError):
    pass


class StudyAbortedError(DefcureError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
