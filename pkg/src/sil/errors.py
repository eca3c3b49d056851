"""Exception types shared across the package.

CLI exit-code mapping: ContractError / ParseError / ValidationError are
user-input problems (exit 1); NumericError and anything unexpected are
runtime failures (exit 2).
"""


class ContractError(ValueError):
    """A documented precondition of an operation was violated."""


class ParseError(ValueError):
    """A file could not be parsed; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(ValueError):
    """Parsed data violates a corpus/schema invariant."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class IntegrityError(ValueError):
    """Cross-file consistency check failed (e.g. token/vector count mismatch)."""


class NumericError(ArithmeticError):
    """A non-finite value appeared during numeric computation."""


class UndefinedCorrelationError(ValueError):
    """Pearson correlation requested for a series with zero variance."""
