"""Exception types raised across the package."""


class RecurrctError(Exception):
    """Base class for all package errors."""


class ValidationError(RecurrctError, ValueError):
    """Input violates a documented precondition or data invariant."""


class DegenerateSeriesError(ValidationError):
    """Series (or distance set) has no spread to work with."""

    def __init__(self, msg: str = "degenerate series"):
        super().__init__(msg)


class StageError(RecurrctError):
    """A pipeline stage is missing an upstream artifact."""
