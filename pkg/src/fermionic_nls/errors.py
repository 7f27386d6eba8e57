"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """Bad input: wrong lengths, out-of-range parameters, non-finite samples."""


class SingularSystemError(ArithmeticError):
    """A tridiagonal elimination hit a zero pivot."""


class NumericalFailureError(RuntimeError):
    """An iterative kernel (bisection, eigen-iteration) did not converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class DegeneratePairError(ValueError):
    """Gram matrix of an orbital pair is (numerically) singular."""


class DomainTooSmallError(ValueError):
    """The requested configuration does not fit inside the grid."""


class NonConvergenceError(RuntimeError):
    """Iteration cap reached before the residual dropped below tolerance.

    ``state`` holds the last iterate (a GroundState, not gauge fixed) so
    callers can still inspect or salvage it.
    """

    def __init__(self, message, residual, state=None):
        super().__init__(message)
        self.residual = residual
        self.state = state


class StagnationError(RuntimeError):
    """Energy could not be decreased even at the smallest allowed step."""

    def __init__(self, message, residual, state=None):
        super().__init__(message)
        self.residual = residual
        self.state = state


class BumpCountError(ValueError):
    """Density does not have exactly two bumps above the threshold."""

    def __init__(self, message, peaks):
        super().__init__(message)
        self.peaks = list(peaks)


class FitDivergedError(RuntimeError):
    """Decomposition optimizer left the admissible parameter box."""


class WindowError(ValueError):
    """Analysis window around a bump contains too few grid points."""


class ScaleUnderflowError(ArithmeticError):
    """exp(-sqrt|mu| x_n) is too small to compare against."""


class PredictionUndefinedError(ValueError):
    """Asymptotic prediction requested outside its range of validity."""


class InsufficientDataError(ValueError):
    """Too few records for a regression."""
