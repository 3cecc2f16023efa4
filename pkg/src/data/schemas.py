"""
Core domain types shared across the pipeline.

EN: Documents, relation types, gold entities/relations and the shared pair orientation.
FA: اسناد، انواع رابطه، موجودیت‌ها و روابط مرجع، و جهت مشترک زوج‌ها.
"""

from __future__ import annotations

from enum import Enum
from typing import Literal, Tuple

from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from src.errors import UnknownRelationType

DatasetTag = Literal["n2c2", "ade", "other"]
Mode = Literal["baseline", "umls", "rag"]
MODES: Tuple[str, ...] = ("baseline", "umls", "rag")

# EN: Sentinel offsets for entities whose spans are unknown (surface-only matching)
# FA: آفست‌های نگهبان برای موجودیت‌هایی که بازه متنی ندارند (تطبیق فقط با رشته)
SENTINEL_OFFSET = -1

# EN: Tuples emitted by the model and compared by the evaluator are (drug, other entity).
#     Templates state this order and the parser reads it back.
# FA: زوج‌هایی که مدل تولید و ارزیاب مقایسه می‌کند به ترتیب (دارو، موجودیت دیگر) هستند.
DRUG_FIRST = True
DRUG_LABEL = "Drug"


class RelationType(str, Enum):
    """
    EN: The eight n2c2 pairs and the two ADE corpus pairs.
    FA: هشت زوج رابطه n2c2 و دو زوج رابطه پیکره ADE.
    """

    STRENGTH_DRUG = "Strength-Drug"
    DURATION_DRUG = "Duration-Drug"
    ROUTE_DRUG = "Route-Drug"
    FORM_DRUG = "Form-Drug"
    ADE_DRUG = "ADE-Drug"
    DOSAGE_DRUG = "Dosage-Drug"
    REASON_DRUG = "Reason-Drug"
    FREQUENCY_DRUG = "Frequency-Drug"
    DRUG_ADE = "Drug-ADE"
    DRUG_DOSAGE = "Drug-Dosage"

    @classmethod
    def parse(cls, name: str) -> "RelationType":
        """EN/FA: نام رابطه را به نوع شمارشی تبدیل می‌کند یا خطا می‌دهد."""
        try:
            return cls(name)
        except ValueError as exc:
            raise UnknownRelationType(f"Unknown relation type: {name!r}") from exc

    @property
    def head_label(self) -> str:
        return self.value.split("-", 1)[0]

    @property
    def tail_label(self) -> str:
        return self.value.split("-", 1)[1]

    @property
    def other_label(self) -> str:
        """The non-drug entity category of the pair."""
        return self.tail_label if self.head_label == DRUG_LABEL else self.head_label

    @property
    def dataset(self) -> DatasetTag:
        return "ade" if self.head_label == DRUG_LABEL else "n2c2"


N2C2_RELATIONS: Tuple[RelationType, ...] = tuple(r for r in RelationType if r.dataset == "n2c2")
ADE_RELATIONS: Tuple[RelationType, ...] = tuple(r for r in RelationType if r.dataset == "ade")


class Document(BaseModel):
    """
    EN: One clinical text instance.
    FA: یک نمونه متن بالینی.
    """

    model_config = ConfigDict(frozen=True)

    doc_id: str
    text: str
    dataset_tag: DatasetTag = "other"

    @field_validator("text")
    @classmethod
    def _text_non_empty(cls, value: str) -> str:
        if not value:
            raise ValueError("Document text must be non-empty")
        return value


class GoldEntity(BaseModel):
    """EN/FA: موجودیت حاشیه‌نویسی‌شده با بازه کاراکتری (یا آفست نگهبان)."""

    model_config = ConfigDict(frozen=True)

    entity_id: str
    label: str
    start: int
    end: int
    surface: str

    @property
    def has_span(self) -> bool:
        return self.start != SENTINEL_OFFSET and self.end != SENTINEL_OFFSET


class GoldRelation(BaseModel):
    """
    EN: One gold relation; head is the non-Drug argument for n2c2, the Drug for ADE pairs.
    FA: یک رابطه مرجع؛ در n2c2 سر رابطه موجودیت غیر دارویی و در ADE خود دارو است.
    """

    model_config = ConfigDict(frozen=True)

    doc_id: str
    rtype: RelationType
    head: GoldEntity
    tail: GoldEntity

    @model_validator(mode="after")
    def _labels_match_rtype(self) -> "GoldRelation":
        if self.head.label != self.rtype.head_label or self.tail.label != self.rtype.tail_label:
            raise ValueError(
                f"{self.rtype.value} expects ({self.rtype.head_label}, {self.rtype.tail_label}) "
                f"but got ({self.head.label}, {self.tail.label})"
            )
        return self

    def as_pair(self) -> Tuple[str, str]:
        """
        EN: (drug surface, other surface) in the shared tuple orientation.
        FA: (رشته دارو، رشته موجودیت دیگر) با جهت مشترک زوج‌ها.
        """
        if self.head.label == DRUG_LABEL:
            return self.head.surface, self.tail.surface
        return self.tail.surface, self.head.surface


__all__ = [
    "DatasetTag",
    "Mode",
    "MODES",
    "SENTINEL_OFFSET",
    "DRUG_FIRST",
    "DRUG_LABEL",
    "RelationType",
    "N2C2_RELATIONS",
    "ADE_RELATIONS",
    "Document",
    "GoldEntity",
    "GoldRelation",
]
