"""Exception hierarchy.

Every error carries a ``category`` string so the command line can report a
machine-readable class of failure.
"""

from __future__ import annotations


class EinselError(Exception):
    category = "error"


class ParseError(EinselError, ValueError):
    category = "parse"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(EinselError, ValueError):
    category = "validation"


class NumericError(EinselError, ArithmeticError):
    category = "numeric"


class CapacityError(EinselError, MemoryError):
    category = "capacity"
