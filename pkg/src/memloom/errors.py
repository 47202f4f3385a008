"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class MemloomError(Exception):
    """Base class for all engine errors."""


class MalformedInput(MemloomError):
    """Input file or payload failed to parse."""


class InvariantViolation(MemloomError):
    """A structural invariant of the data model was violated."""


class EmptyConversation(MemloomError):
    """Conversation has no sessions or no utterances."""


class UnknownCategory(MemloomError):
    """QA item carries a category outside the closed set."""


class BackendUnavailable(MemloomError):
    """Chat/embedding backend unreachable after exhausting retries."""


class Timeout(BackendUnavailable):
    """Backend call exceeded the configured timeout on every attempt."""


class TemplateUnbound(MemloomError):
    """Prompt template has placeholders not bound by the request variables."""


class EmptyInput(MemloomError):
    """Operation requires a non-empty input."""


class DimensionMismatch(MemloomError):
    """Vector dimension differs from the engine-wide embedding dimension."""


class NotFound(MemloomError):
    """Requested ids were missing; found records are still carried along.

    Attributes:
        missing: ids that could not be resolved.
        records: records that were resolved, in request order.
    """

    def __init__(self, missing, records=None):
        super().__init__(f"ids not found: {sorted(missing)}")
        self.missing = list(missing)
        self.records = list(records or [])


class IoFailure(MemloomError):
    """Filesystem read/write failed."""


class FormatVersionMismatch(MemloomError):
    """Persisted store carries an unsupported format version."""


class EmptyStore(MemloomError):
    """Retrieval attempted before any memory was indexed."""


class UnparseableVerdict(MemloomError):
    """LLM judge reply could not be parsed into a boolean verdict."""


class DegenerateInput(MemloomError):
    """Numerical routine received input it cannot fit (and no fallback applies)."""
