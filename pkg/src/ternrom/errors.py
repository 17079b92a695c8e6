"""Exception hierarchy shared by every module.

The CLI maps each class to a distinct exit code, so library code raises the
most specific class that applies.
"""


class TernromError(Exception):
    """Base class for all library errors."""


class DomainError(TernromError, ValueError):
    """An argument lies outside the domain of an operation."""


class CapacityError(TernromError):
    """A model, cache or adapter does not fit the configured hardware."""


class FormatError(TernromError):
    """A file or text artifact is malformed.

    ``offset`` is the byte offset (or line number for text formats) at which
    the problem was detected, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class InvariantError(TernromError):
    """An internal consistency check failed."""
