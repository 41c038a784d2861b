"""Exception hierarchy.

Numerical failures derive from :class:`NumericalError` so the command line
can map them to a distinct exit status; malformed input derives from
:class:`DataError`.
"""


class PwbError(Exception):
    """Base class for all errors raised by this package."""


class DataError(PwbError, ValueError):
    """Input data violates the balanced-panel contract."""


class PanelFormatError(DataError):
    """A panel file could not be parsed.

    Parameters
    ----------
    message : str
        Description of the problem.
    line : int, optional
        1-based line number in the source file (header is line 1).
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(PwbError, ArithmeticError):
    """A numerical precondition failed."""


class SingularDesign(NumericalError):
    """X'X is singular or too ill-conditioned to invert."""


class NotPositiveSemiDefinite(NumericalError):
    """A kernel matrix has a clearly negative eigenvalue."""


class DegenerateAutocorrelation(NumericalError):
    """The serial-dependence plug-in rule cannot be evaluated."""


class SingularGram(NumericalError):
    """A whitening Gram matrix vanishes while its indicator is switched on."""


class DegenerateDraws(NumericalError):
    """A bootstrap column has (numerically) zero spread."""


class ExperimentAborted(NumericalError):
    """More than the tolerated share of Monte Carlo replicates failed."""
