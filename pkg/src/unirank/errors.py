"""Exception hierarchy shared by every backend.

Every error raised by the library derives from :class:`RerankError`; the
class name doubles as the machine-readable error code surfaced by the CLI and
the REST service.
"""

from __future__ import annotations


class RerankError(Exception):
    """Base class for all library errors.

    ``kind`` is filled in by the registry when an error crosses a backend
    boundary, so callers can tell which reranker family raised it.
    """

    kind: str | None = None

    @property
    def name(self) -> str:
        return type(self).__name__

    def __str__(self) -> str:
        msg = super().__str__()
        if self.kind is not None:
            return f"[{self.kind}] {msg}"
        return msg


# core / input normalization


class InputError(RerankError, ValueError):
    """Request inputs violate a precondition."""


class DuplicateDocId(InputError):
    pass


class LengthMismatch(InputError):
    pass


class InvalidMetadata(InputError):
    pass


class InvalidDocId(InputError):
    pass


class NotAPermutation(InputError):
    pass


class UnknownDocId(RerankError, KeyError):
    def __str__(self) -> str:
        # KeyError.__str__ would repr() the message
        return RerankError.__str__(self)


class NoScoresAvailable(RerankError):
    """Scores were requested from ordered-only results."""


# registry


class UnknownModelType(RerankError, ValueError):
    def __init__(self, label: str, known: list[str]) -> None:
        self.label = label
        self.known = list(known)
        super().__init__(f"unknown model type {label!r}; known aliases: {', '.join(self.known)}")


class CapabilityMissing(RerankError):
    def __init__(self, message: str, *, requested: str, missing: str, hint: str) -> None:
        self.requested = requested
        self.missing = missing
        self.hint = hint
        super().__init__(message)


class BackendInitFailure(RerankError):
    pass


# scoring


class ProviderFailure(RerankError):
    """An inference provider raised or returned unusable output.

    ``index`` and ``doc_id`` locate the failing item when known.
    """

    def __init__(self, message: str, *, index: int | None = None, doc_id: object = None) -> None:
        self.index = index
        self.doc_id = doc_id
        super().__init__(message)


class DimensionMismatch(RerankError, ValueError):
    pass


# listwise


class UnparseableWindow(RerankError):
    def __init__(self, message: str, *, offset: int | None = None, raw: str | None = None) -> None:
        self.offset = offset
        self.raw = raw
        super().__init__(message)


class WindowRankerTransportError(RerankError):
    pass


# hosted API


class ApiError(RerankError):
    """Failure talking to a hosted reranking endpoint."""

    def __init__(self, message: str, *, status: int | None = None) -> None:
        self.status = status
        super().__init__(message)


class AuthError(ApiError):
    pass


class RateLimited(ApiError):
    pass


class MalformedResponse(ApiError):
    pass


class Timeout(ApiError, TimeoutError):
    pass


# tooling


class QueryMismatch(RerankError, ValueError):
    pass


class InputFormatError(RerankError, ValueError):
    """A line in an input file could not be parsed."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None) -> None:
        self.path = path
        self.line = line
        where = f"{path}:{line}: " if path is not None and line is not None else ""
        super().__init__(f"{where}{message}")
