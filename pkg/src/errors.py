"""
Exception hierarchy for the extraction pipeline.

EN: Input-shape problems subclass ValueError, state/backend problems subclass RuntimeError.
FA: خطاهای شکل ورودی از ValueError و خطاهای وضعیت/بک‌اند از RuntimeError ارث می‌برند.
"""

from __future__ import annotations

from typing import Optional


class ExtractionError(Exception):
    """Root of every error raised by this package."""


# --- lexicon_ingest ---------------------------------------------------------


class MalformedRow(ExtractionError, ValueError):
    """
    EN: An RRF record has too few fields or an invalid identifier.
    FA: رکورد RRF فیلد کافی ندارد یا شناسه آن نامعتبر است.
    """

    def __init__(self, message: str, line_no: Optional[int] = None) -> None:
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(prefix + message)


class EmptyLexicon(ExtractionError, ValueError):
    """Zero terms survived filtering; usually the wrong filter or the wrong files."""


class LexiconCacheError(ExtractionError, ValueError):
    """Lexicon cache file is unreadable or its content hash does not match."""


# --- corpus_io --------------------------------------------------------------


class CorpusError(ExtractionError, ValueError):
    """
    EN: Base for annotation errors; carries the document and line.
    FA: پایه خطاهای حاشیه‌نویسی؛ شناسه سند و شماره خط را نگه می‌دارد.
    """

    def __init__(self, message: str, doc_id: str = "", line_no: Optional[int] = None) -> None:
        self.doc_id = doc_id
        self.line_no = line_no
        where = f"{doc_id}:{line_no}" if line_no is not None else doc_id
        super().__init__(f"[{where}] {message}" if where else message)


class DanglingReference(CorpusError):
    """A relation line cites an entity id that was never defined."""


class OffsetMismatch(CorpusError):
    """An entity's surface differs from the document slice at its offsets."""


class SchemaError(CorpusError):
    """A corpus record misses required keys."""


# --- prompt_builder ---------------------------------------------------------


class TemplateError(ExtractionError, ValueError):
    """Unknown, duplicated or unresolved placeholders in a prompt template."""


class UnknownRelationType(ExtractionError, ValueError):
    """Relation type name is not one of the supported pairs."""


# --- llm_gateway ------------------------------------------------------------


class BackendError(ExtractionError, RuntimeError):
    """Generic non-retryable backend failure."""


class AuthError(BackendError):
    """The backend rejected the credential (HTTP 401/403)."""


class TransientBackendError(BackendError):
    """
    EN: Rate limit, 5xx or transport failure; safe to retry.
    FA: محدودیت نرخ، خطای 5xx یا خطای انتقال؛ قابل تلاش مجدد.
    """

    def __init__(self, message: str, status_code: Optional[int] = None) -> None:
        self.status_code = status_code
        super().__init__(message)


class ExhaustedRetries(BackendError):
    """Retry cap exceeded for a transient failure."""

    def __init__(self, message: str, attempts: int) -> None:
        self.attempts = attempts
        super().__init__(message)


class BackendScriptMiss(BackendError):
    """The scripted mock backend has no entry for the request."""


# --- rag_retriever ----------------------------------------------------------


class RowTooLarge(ExtractionError, ValueError):
    """A single row alone exceeds the chunk token budget."""


class DimensionMismatch(ExtractionError, ValueError):
    """Vectors of different dimensionality were compared or indexed together."""


class ZeroVector(ExtractionError, ValueError):
    """Cosine similarity is undefined for an all-zero vector."""


class EmptyIndex(ExtractionError, ValueError):
    """Query issued against an index with no entries."""


class MissingChunk(ExtractionError, ValueError):
    """A retrieval hit cites a chunk id absent from the chunk store."""


# --- evaluator / pipeline ---------------------------------------------------


class MixedDocuments(ExtractionError, ValueError):
    """score_document received pairs spanning several documents or relation types."""


class EmptyRows(ExtractionError, ValueError):
    """macro_average called without any per-relation rows."""


class SliceMismatch(ExtractionError, ValueError):
    """The run artifact covers documents absent from the gold slice."""


class PipelineError(ExtractionError, RuntimeError):
    """
    EN: Wraps a module error with the (doc_id, rtype) being processed.
    FA: خطای ماژول را همراه با (doc_id, rtype) در حال پردازش بسته‌بندی می‌کند.
    """

    def __init__(self, doc_id: str, rtype: str, cause: BaseException) -> None:
        self.doc_id = doc_id
        self.rtype = rtype
        self.cause = cause
        super().__init__(f"{doc_id}/{rtype}: {type(cause).__name__}: {cause}")


__all__ = [
    "ExtractionError",
    "MalformedRow",
    "EmptyLexicon",
    "LexiconCacheError",
    "CorpusError",
    "DanglingReference",
    "OffsetMismatch",
    "SchemaError",
    "TemplateError",
    "UnknownRelationType",
    "BackendError",
    "AuthError",
    "TransientBackendError",
    "ExhaustedRetries",
    "BackendScriptMiss",
    "RowTooLarge",
    "DimensionMismatch",
    "ZeroVector",
    "EmptyIndex",
    "MissingChunk",
    "MixedDocuments",
    "EmptyRows",
    "SliceMismatch",
    "PipelineError",
]
