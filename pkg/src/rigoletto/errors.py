"""Exception hierarchy shared by every module.

The CLI maps these onto process exit codes: :class:`InvalidInput` and
:class:`IoError` are data errors (2), the numeric family is 3, and
:class:`ConfigError` is a usage error (1).
"""


class RigolettoError(Exception):
    """Base class for all library errors."""


class InvalidInput(RigolettoError, ValueError):
    """Arguments violate an operation's preconditions."""


class NotSpdError(InvalidInput):
    """A matrix expected to be symmetric positive-definite is not."""


class DegenerateInput(InvalidInput):
    """Input is well-formed but carries no usable information (zero trace, ...)."""


class ConfigError(RigolettoError, ValueError):
    """Unknown or malformed configuration entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class IoError(RigolettoError, OSError):
    """Dataset or artifact file could not be read or written."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class NumericError(RigolettoError, ArithmeticError):
    """Base class for numerical failures."""


class NumericOverflow(NumericError):
    """A matrix function would overflow double precision."""


class NumericFailure(NumericError):
    """A linear system or eigenproblem is singular or ill-posed."""


class ConvergenceFailure(NumericError):
    """An iterative solver ran out of iterations.

    Attributes
    ----------
    iterate : ndarray
        Last iterate reached.
    residual : float
        Norm of the stopping criterion at ``iterate``.
    """

    def __init__(self, message, iterate=None, residual=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


class FoldFailure(RigolettoError):
    """A cross-validation fold failed; the original error is ``__cause__``."""

    def __init__(self, fold, cause):
        super().__init__(f"fold {fold} failed: {cause}")
        self.fold = fold
        self.cause = cause


class DegenerateChannelWarning(UserWarning):
    """Connectivity entries were undefined (dead channel, flat envelope) and set to 0."""
