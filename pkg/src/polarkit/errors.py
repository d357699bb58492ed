"""Exception hierarchy.

Every error carries a ``category`` used by the CLI to choose an exit code and
a machine-parsable message prefix.
"""

from __future__ import annotations


class PolarkitError(Exception):
    category = "error"


class DataError(PolarkitError, ValueError):
    """Malformed, inconsistent or unreadable input data."""

    category = "data"


class DimensionError(DataError):
    category = "data"


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(PolarkitError, ValueError):
    """Argument outside the mathematical domain of an operation."""

    category = "numeric"


class DegenerateInputError(PolarkitError, ValueError):
    """Input geometry does not determine a unique answer."""

    category = "numeric"


class NotFoundError(DegenerateInputError):
    category = "numeric"
