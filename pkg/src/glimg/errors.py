"""Exception hierarchy shared across the package.

CLI exit-code mapping: usage errors -> 1, DataError -> 2,
NumericalError -> 3.
"""


class GlimgError(Exception):
    """Base class for all package errors."""


class DataError(GlimgError):
    """Bad input data: unreadable files, empty datasets, invalid configs."""


class ParseError(DataError):
    """A rating file line failed to parse. Carries the 1-based line number."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


class NumericalError(GlimgError):
    """A linear solve failed or produced non-finite values."""


class ModelFormatError(GlimgError):
    """A model file has a bad magic header, wrong version, or is truncated."""
