"""Exception hierarchy; the CLI maps each class to its own exit code."""


class HJBSeriesError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(HJBSeriesError, ValueError):
    """Array or series shapes do not fit together."""


class PreconditionError(HJBSeriesError):
    """Stabilizability, detectability or convexity assumptions fail."""


class ConvergenceError(HJBSeriesError):
    """An iteration did not reach its tolerance within the allowed budget."""


class SingularOperatorError(HJBSeriesError):
    """A linear solve met a singular (or numerically singular) operator."""


class NotHyperbolicError(HJBSeriesError):
    """Eigenvalues lie on the stability boundary."""


class DomainError(HJBSeriesError, ValueError):
    """An expression was evaluated outside its domain."""


class CharacteristicPointError(HJBSeriesError):
    """The closed-loop vector field vanishes at a marching center."""


class SeriesInvalidError(HJBSeriesError):
    """No sublevel set above the minimal level passes the Lyapunov test."""


class ProblemFileError(HJBSeriesError, ValueError):
    """A problem file cannot be parsed or violates its schema."""
