"""Exception types shared across the toolkit.

Every anticipated failure raises a subclass of :class:`XmodalError`, so
callers (and the CLI) can separate data problems from genuine bugs.
"""


class XmodalError(Exception):
    """Base class for all toolkit errors."""


class DegenerateVectorError(XmodalError):
    """An embedding (or adapted embedding) has effectively zero norm."""


class ShapeError(XmodalError):
    """Array dimensions are inconsistent with the operation's contract."""


class ParameterError(XmodalError):
    """A configuration value is outside its legal range."""


class LabelError(XmodalError):
    """A label is outside the expected {0, 1} set."""


class GradientError(XmodalError):
    """A gradient contains non-finite values."""


class DataError(XmodalError):
    """A dataset violates a structural precondition (empty, mismatched, ...)."""


class SplitError(DataError):
    """A corpus cannot be partitioned as requested."""


class NotFoundError(XmodalError):
    """A study id is not present in the corpus or index."""


class FormatError(XmodalError):
    """A binary or structured file does not conform to its format."""


class ParseError(XmodalError):
    """A report document is not well-formed markup."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class EmptyReportError(XmodalError):
    """A report has neither findings nor impression text."""


class InsufficientDataError(XmodalError):
    """Too few samples for the requested computation."""
