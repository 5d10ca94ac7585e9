"""Exception hierarchy."""

from __future__ import annotations


class ZsvmrError(Exception):
    """Base class for all package errors."""


class ValidationError(ZsvmrError, ValueError):
    """A value violates a domain invariant."""


class DimensionMismatchError(ValidationError):
    pass


class BackendError(ZsvmrError):
    """A model backend failed to produce a usable answer."""


class TransportError(BackendError):
    """Network-level or 5xx failure; retried before being surfaced."""


class MalformedResponseError(BackendError):
    """The backend answered, but the body could not be interpreted."""

    def __init__(self, message: str, body: str | bytes = ""):
        if isinstance(body, bytes):
            body = body.decode("utf-8", errors="replace")
        self.body_excerpt = body[:500]
        super().__init__(f"{message}; body starts with: {self.body_excerpt!r}")


class DatasetFormatError(ZsvmrError, ValueError):
    """An annotation file could not be parsed."""

    def __init__(self, message: str, path: str = "", line: int | None = None):
        self.path = path
        self.line = line
        where = path
        if line is not None:
            where = f"{path}:{line}" if path else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)
