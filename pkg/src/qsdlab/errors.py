"""Exception hierarchy shared by all qsdlab modules.

The CLI maps these onto exit codes: :class:`ConfigError` to 2 and every
:class:`NumericalError` subclass to 3.
"""


class QsdLabError(Exception):
    """Base class for all package errors."""


class ModelError(QsdLabError, ValueError):
    """Invalid model construction (a violated hypothesis clause)."""


class ConfigError(QsdLabError, ValueError):
    """Malformed or unknown configuration input."""


class DomainError(QsdLabError, ValueError):
    """An operation was called outside the regime where it is defined."""


class NumericalError(QsdLabError, RuntimeError):
    """Base class for numerical failures."""


class QuadratureError(NumericalError):
    """Quadrature failed to converge.

    Attributes
    ----------
    interval : tuple of float or None
        The offending subinterval, when known.
    """

    def __init__(self, message, interval=None):
        if interval is not None:
            message = f"{message} on subinterval [{interval[0]:.6g}, {interval[1]:.6g}]"
        super().__init__(message)
        self.interval = interval


class TruncationError(NumericalError):
    """The truncated spectral domain is too small for the requested eigenpairs."""


class SimulationError(NumericalError):
    """A Monte Carlo run hit an unrecoverable state."""
