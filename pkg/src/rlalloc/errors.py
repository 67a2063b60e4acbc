"""Exception hierarchy.

The CLI maps these onto exit codes: ``ConfigError`` -> 2, ``DataError`` -> 3,
anything else derived from ``RlallocError`` -> 4.
"""


class RlallocError(Exception):
    """Base class for all package errors."""


class ConfigError(RlallocError):
    """Invalid or inconsistent experiment configuration."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class DataError(RlallocError):
    """Input data that cannot be used."""


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class InsufficientDataError(DataError):
    pass


class OrderingError(DataError):
    pass


class EmptyPartitionError(DataError):
    pass


class InsufficientHistoryError(RlallocError):
    """A trailing-window feature was requested before enough history exists."""


class LookaheadExhaustedError(RlallocError):
    """The oracle signal's forward window runs past the end of the series."""


class WealthWipeoutError(RlallocError):
    """A daily portfolio return of -100% or worse."""


class ShapeError(RlallocError):
    """Q-tables built for different state spaces were combined."""


class MissingDataWarning(UserWarning):
    """A CSV row was dropped because one of its prices was unusable."""
