"""
Pair-level metrics for relation extraction evaluation.

EN: Implements per-document TP/FP/FN counting, micro P/R/F1 over documents and the macro
    row-average used for per-relation tables.
FA: شمارش TP/FP/FN در سطح سند، دقت/یادآوری/F1 خرد روی اسناد و میانگین کلان سطرها را پیاده‌سازی می‌کند.
"""

from __future__ import annotations

from typing import Dict, Iterable, List, Mapping, NamedTuple, Sequence, Set, Tuple

from pydantic import BaseModel, ConfigDict, Field

from src.data.schemas import GoldRelation, RelationType
from src.errors import EmptyRows, MixedDocuments
from src.models.output_parser import ExtractedPair
from src.utils.text import normalize_surface

REPORT_DECIMALS = 3
TABLE_TOLERANCE = 0.015

NormPair = Tuple[str, str]


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


class EvalCounts(BaseModel):
    """
    EN: Raw counts; additive across documents.
    FA: شمارش‌های خام؛ روی اسناد جمع‌پذیرند.
    """

    model_config = ConfigDict(frozen=True)

    tp: int = Field(0, ge=0)
    fp: int = Field(0, ge=0)
    fn: int = Field(0, ge=0)

    def __add__(self, other: "EvalCounts") -> "EvalCounts":
        return EvalCounts(tp=self.tp + other.tp, fp=self.fp + other.fp, fn=self.fn + other.fn)


class RelationMetrics(BaseModel):
    model_config = ConfigDict(frozen=True)

    rtype: RelationType
    precision: float
    recall: float
    f1: float
    counts: EvalCounts


def normalize_pair(head: str, tail: str) -> NormPair:
    return normalize_surface(head), normalize_surface(tail)


def prf(counts: EvalCounts) -> PRF:
    """
    Compute P, R, F1 from counts.

    EN: 0/0 is defined as 0; F1 is 0 when P + R is 0.
    FA: مقدار 0/0 برابر صفر تعریف می‌شود؛ اگر P + R صفر باشد F1 صفر است.
    """
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PRF(precision, recall, f1)


def _contains(a: str, b: str) -> bool:
    return bool(a) and bool(b) and (a in b or b in a)


def count_matches(pred: Set[NormPair], gold: Set[NormPair], lenient: bool = False) -> EvalCounts:
    """
    Count TP/FP/FN between two sets of normalized (drug, other) pairs.

    EN: Strict mode is set intersection. Lenient mode greedily pairs each prediction (sorted order)
        with the first unused gold pair whose elements contain, or are contained in, its own.
    FA: حالت سخت‌گیرانه اشتراک مجموعه‌هاست. حالت آسان‌گیر هر پیش‌بینی را به اولین زوج مرجع
        استفاده‌نشده‌ای که عناصرش شامل عناصر آن باشد (یا برعکس) نسبت می‌دهد.
    """
    if not lenient:
        tp = len(pred & gold)
    else:
        unused: List[NormPair] = sorted(gold)
        tp = 0
        for p_drug, p_other in sorted(pred):
            for i, (g_drug, g_other) in enumerate(unused):
                if _contains(p_drug, g_drug) and _contains(p_other, g_other):
                    tp += 1
                    del unused[i]
                    break
    return EvalCounts(tp=tp, fp=len(pred) - tp, fn=len(gold) - tp)


def score_document(
    pred: Iterable[ExtractedPair],
    gold: Iterable[GoldRelation],
    lenient: bool = False,
) -> EvalCounts:
    """
    Score one document for one relation type.

    EN: Matching is equality of normalized (drug, other) pairs with set semantics.
    FA: تطبیق برابری زوج‌های نرمال‌شده (دارو، دیگری) با معنای مجموعه‌ای است.
    """
    pred, gold = list(pred), list(gold)
    docs = {p.doc_id for p in pred} | {g.doc_id for g in gold}
    rtypes = {p.rtype for p in pred} | {g.rtype for g in gold}
    if len(docs) > 1 or len(rtypes) > 1:
        raise MixedDocuments(
            f"score_document expects one document and one relation type, got {len(docs)} docs / {len(rtypes)} types"
        )
    pred_set = {normalize_pair(*p.as_pair()) for p in pred}
    gold_set = {normalize_pair(*g.as_pair()) for g in gold}
    return count_matches(pred_set, gold_set, lenient=lenient)


def micro_metrics(counts: Iterable[EvalCounts]) -> PRF:
    """
    EN: Sum tp/fp/fn across documents first, then compute P/R/F1.
    FA: ابتدا tp/fp/fn روی اسناد جمع شده و سپس P/R/F1 محاسبه می‌شود.
    """
    total = EvalCounts()
    for c in counts:
        total = total + c
    return prf(total)


def relation_metrics(rtype: RelationType, counts: Iterable[EvalCounts]) -> RelationMetrics:
    total = EvalCounts()
    for c in counts:
        total = total + c
    p, r, f = prf(total)
    return RelationMetrics(rtype=rtype, precision=p, recall=r, f1=f, counts=total)


def macro_average(rows: Sequence[RelationMetrics]) -> PRF:
    """
    Unweighted mean of per-relation rows.

    EN: Raises EmptyRows for an empty input.
    FA: برای ورودی خالی خطای EmptyRows می‌دهد.
    """
    if not rows:
        raise EmptyRows("macro_average needs at least one row")
    n = len(rows)
    return PRF(
        sum(r.precision for r in rows) / n,
        sum(r.recall for r in rows) / n,
        sum(r.f1 for r in rows) / n,
    )


class AverageAudit(NamedTuple):
    computed: Dict[str, float]
    reported: Dict[str, float]
    inconsistent: List[str]

    @property
    def consistent(self) -> bool:
        return not self.inconsistent


def audit_reported_average(
    columns: Mapping[str, Sequence[float]],
    reported: Mapping[str, float],
    tolerance: float = TABLE_TOLERANCE,
) -> AverageAudit:
    """
    Check a published "Average" row against the mean of its own rows.

    EN: Columns whose mean differs from the reported value by more than tolerance are flagged.
    FA: ستون‌هایی که میانگینشان بیش از حد مجاز با مقدار گزارش‌شده فاصله دارد علامت‌گذاری می‌شوند.
    """
    computed: Dict[str, float] = {}
    inconsistent: List[str] = []
    for name, values in columns.items():
        if not values:
            raise EmptyRows(f"column {name!r} has no rows")
        computed[name] = sum(values) / len(values)
        if name in reported and abs(computed[name] - reported[name]) > tolerance:
            inconsistent.append(name)
    return AverageAudit(computed=computed, reported=dict(reported), inconsistent=inconsistent)


__all__ = [
    "REPORT_DECIMALS",
    "TABLE_TOLERANCE",
    "PRF",
    "EvalCounts",
    "RelationMetrics",
    "normalize_surface",
    "normalize_pair",
    "prf",
    "count_matches",
    "score_document",
    "micro_metrics",
    "relation_metrics",
    "macro_average",
    "AverageAudit",
    "audit_reported_average",
]
