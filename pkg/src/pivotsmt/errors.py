"""Shared exception types."""


class PivotSmtError(Exception):
    """Base class for all toolkit errors."""


class DataError(PivotSmtError):
    """Raised when input data is malformed or inconsistent.

    The CLI maps this to exit code 2.
    """
