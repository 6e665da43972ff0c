"""Shared exception types."""


class Inconsistent(Exception):
    """The constraint store has no satisfying completion.

    Raised by assertion and update operations.  Public entry points roll
    the store back to its state before the failing operation, so a caught
    Inconsistent leaves the store usable.
    """


class ScriptError(Exception):
    """A query script or scenario file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
