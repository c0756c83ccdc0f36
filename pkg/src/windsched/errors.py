"""Exception hierarchy.

The CLI maps these to exit codes: ConfigError -> 1, DataError (and
subclasses) -> 2, SchedulingError (and subclasses) -> 3.
"""


class WindschedError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(WindschedError):
    """Invalid command line usage or an unreadable/incomplete config file."""


class DataError(WindschedError):
    """Input data violates a contract: bad file, bad cell, degenerate statistics."""


class MissingColumnError(DataError):
    """A column required by the mapping is absent from the CSV header."""

    def __init__(self, column: str, path=None):
        self.column = column
        self.path = path
        where = f" in {path}" if path else ""
        super().__init__(f"header{where} lacks mapped column {column!r}")


class RowError(DataError):
    """A single CSV row could not be ingested. Carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class InsufficientDataError(DataError):
    """Fewer usable rows than the operation requires."""


class ConstantSeriesError(DataError):
    """A series is constant, so its correlation is undefined."""


class ZeroVarianceError(ConstantSeriesError):
    """A column has zero variance and cannot be standardized."""


class CollinearityError(DataError):
    """The attribute correlation system is singular or ill-conditioned."""

    def __init__(self, message: str, worst_pair=None):
        self.worst_pair = worst_pair
        super().__init__(message)


class MissingFieldError(DataError):
    """A record lacks a field the operation needs."""

    def __init__(self, message: str, fields=()):
        self.fields = tuple(fields)
        super().__init__(message)


class SchedulingError(WindschedError):
    """Base class for scheduling failures."""


class InfeasibleError(SchedulingError):
    """No assignment satisfies the instance constraints."""


class SearchSpaceError(SchedulingError):
    """Exhaustive enumeration would exceed the configured combination limit."""
