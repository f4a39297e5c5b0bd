"""Exception types shared across the package."""


class EraimError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(EraimError, ValueError):
    """An argument is outside the domain of the operation."""


class FormatError(EraimError):
    """An input file does not match its schema."""


class RowError(FormatError):
    """A single malformed row in an otherwise well-formed file."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class SingularGeometryError(EraimError):
    """The anchor geometry does not determine a unique solution."""


class ConvergenceError(EraimError):
    """An iterative solver did not converge."""


class InsufficientDataError(EraimError):
    """Too few measurements for the requested operation."""


class NoDataError(EraimError):
    """No subset estimates are available for a decision."""
