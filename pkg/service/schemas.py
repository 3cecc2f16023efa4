"""
Pydantic schemas for API requests and responses.

EN: Defines request/response models for the inspection API.
FA: مدل‌های درخواست/پاسخ برای API بازرسی پایپ‌لاین را تعریف می‌کند.
"""

from __future__ import annotations

from typing import List, Optional

from pydantic import BaseModel, Field

from src.data.schemas import Mode


class ConceptMapRequest(BaseModel):
    """
    EN: Request body for concept mapping.
    FA: بدنه درخواست برای نگاشت مفاهیم.
    """

    text: str = Field(..., min_length=1)
    doc_id: str = "request"


class ConceptMatchOut(BaseModel):
    surface: str
    start: int
    end: int
    cui: str
    sty: str


class ConceptMapResponse(BaseModel):
    """
    EN: Every match plus the filtered medication list.
    FA: همه تطبیق‌ها به همراه فهرست فیلترشده داروها.
    """

    doc_id: str
    matches: List[ConceptMatchOut]
    medication_list: List[str]


class RenderRequest(BaseModel):
    """
    EN: Request body for prompt rendering; rtype is a relation name such as "Strength-Drug".
    FA: بدنه درخواست ساخت پرامپت؛ rtype نام رابطه است، مثلاً "Strength-Drug".
    """

    text: str = Field(..., min_length=1)
    rtype: str
    mode: Mode = "baseline"
    doc_id: str = "request"


class RenderResponse(BaseModel):
    prompt_id: str
    text: str
    doc_id: str
    rtype: str
    mode: Mode
    medication_terms: List[str]


class ParseRequest(BaseModel):
    """
    EN: Request body for parsing a raw completion.
    FA: بدنه درخواست برای تجزیه پاسخ خام مدل.
    """

    raw: str
    rtype: str
    mode: Mode = "baseline"
    doc_id: str = "request"
    dedupe: bool = True


class PairOut(BaseModel):
    head: str
    tail: str


class DiagnosticOut(BaseModel):
    severity: str
    message: str


class ParseResponse(BaseModel):
    pairs: List[PairOut]
    diagnostics: List[DiagnosticOut]
    clean: bool


class HealthResponse(BaseModel):
    """
    EN: Health check response.
    FA: پاسخ بررسی سلامت سرویس.
    """

    status: str
    detail: str
    lexicon_terms: Optional[int] = None


__all__ = [
    "ConceptMapRequest",
    "ConceptMatchOut",
    "ConceptMapResponse",
    "RenderRequest",
    "RenderResponse",
    "ParseRequest",
    "PairOut",
    "DiagnosticOut",
    "ParseResponse",
    "HealthResponse",
]
