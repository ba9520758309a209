"""Exception hierarchy shared by the whole package."""


class SwdaError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SwdaError):
    """Arguments violate a documented precondition (shape, range, finiteness)."""


class DegenerateInputError(SwdaError):
    """A vector or feature row is degenerate (zero norm) where a direction is required."""


class EmptyClassError(SwdaError):
    """A class received zero probability mass or zero assigned samples."""


class InvalidDatasetError(SwdaError):
    """A dataset is unusable for the requested operation (missing labels, empty, no class coverage)."""


class NotInitializedError(SwdaError):
    """A representative set is consumed before its first update populated it."""


class ParseError(SwdaError):
    """A structured text file (CSV, config, checkpoint) is malformed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(SwdaError):
    """A configuration document carries unknown keys or invalid values."""
