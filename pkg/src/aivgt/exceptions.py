"""Exception hierarchy shared by all modules."""


class AivgtError(Exception):
    """Base class for errors raised by this package."""


class InputError(AivgtError, ValueError):
    """Invalid arguments: unknown nodes, wrong graph kind, missing edges."""


class ParseError(InputError):
    """Malformed graph text or CSV input."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class DegenerateColumnError(AivgtError):
    """A data column is constant."""


class SingularMatrixError(AivgtError):
    """A conditioning matrix or design matrix is (numerically) singular."""


class DegenerateCorrelationError(AivgtError):
    """A partial correlation is +-1, so the Fisher z transform is undefined."""


class WeakInstrumentError(AivgtError):
    """The instrument has (numerically) zero partial covariance with the treatment."""
