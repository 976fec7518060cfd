# core/errors.py
"""
Exception hierarchy shared by every module.
"""

from typing import Optional


class ZoomError(Exception):
    """Base class for all engine errors."""


class ArgumentError(ZoomError, ValueError):
    """A caller passed an argument that violates an operation's precondition."""


class FormatError(ZoomError, ValueError):
    """A file does not match the expected on-disk format."""

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class StorageError(ZoomError, OSError):
    """An I/O operation against the full-view store or an index file failed."""

    def __init__(self, message: str, vector_id: Optional[int] = None):
        if vector_id is not None:
            message = f"{message} (vector id {vector_id})"
        super().__init__(message)
        self.vector_id = vector_id


class TuningError(ZoomError):
    """Raised for malformed tuning requests (never for an unmet recall target)."""
