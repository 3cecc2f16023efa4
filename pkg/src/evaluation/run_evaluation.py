"""
Evaluation of extraction runs.

EN: Scores a run artifact against gold relations, builds the per-relation report, compares several
    reports side by side and writes JSON, plain-text and parquet outputs.
FA: فایل اجرا را در برابر روابط مرجع ارزیابی می‌کند، گزارش به تفکیک رابطه می‌سازد، چند گزارش را کنار هم
    مقایسه می‌کند و خروجی‌های JSON، متنی و parquet می‌نویسد.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from src.data.schemas import GoldRelation, Mode, RelationType
from src.errors import SliceMismatch
from src.evaluation.metrics import (
    PRF,
    REPORT_DECIMALS,
    EvalCounts,
    RelationMetrics,
    macro_average,
    micro_metrics,
    relation_metrics,
    score_document,
)
from src.models.output_parser import ExtractedPair
from src.pipeline.artifact import RunArtifact, RunRecord
from src.utils.io import content_hash, ensure_dir
from src.utils.log import log_event, setup_logger

logger = setup_logger("umls_extract.evaluation")

REPORT_FILE = "report.json"
TABLE_FILE = "report.txt"
COUNTS_FILE = "document_counts.parquet"


class Scores(BaseModel):
    model_config = ConfigDict(frozen=True)

    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0

    @classmethod
    def of(cls, values: PRF) -> "Scores":
        return cls(precision=values.precision, recall=values.recall, f1=values.f1)


class RunMetadata(BaseModel):
    """EN/FA: مشخصات اجرای ارزیابی‌شده و برش پیکره."""

    model_config = ConfigDict(frozen=True, protected_namespaces=())

    mode: Mode
    model_id: str
    corpus_path: str
    corpus_slice: str
    document_count: int
    artifact_hash: str
    failed_records: int = 0
    generated_at: Optional[str] = None


class DocumentCount(BaseModel):
    model_config = ConfigDict(frozen=True)

    doc_id: str
    rtype: RelationType
    tp: int
    fp: int
    fn: int
    lenient_tp: Optional[int] = None


class EvalReport(BaseModel):
    """
    Evaluation report of one run.

    EN: macro_average is the unweighted mean of per_relation; micro pools counts of every document and
        relation type. Lenient rows are filled only when containment matching was requested.
    FA: macro_average میانگین بدون وزن سطرهای per_relation است؛ micro شمارش همه اسناد و انواع رابطه را
        جمع می‌کند. سطرهای آسان‌گیر فقط در صورت درخواست تطبیق شمولی پر می‌شوند.
    """

    metadata: RunMetadata
    per_relation: List[RelationMetrics]
    macro_average: Scores
    micro: Scores
    lenient_per_relation: List[RelationMetrics] = Field(default_factory=list)
    lenient_macro_average: Optional[Scores] = None
    # EN: Persisted as parquet beside the JSON report
    # FA: به صورت parquet کنار گزارش JSON ذخیره می‌شود
    document_counts: List[DocumentCount] = Field(default_factory=list, exclude=True)

    def row(self, rtype: RelationType) -> Optional[RelationMetrics]:
        return next((r for r in self.per_relation if r.rtype == rtype), None)

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True, ensure_ascii=False)


def _predicted_pairs(record: RunRecord) -> List[ExtractedPair]:
    return [
        ExtractedPair(head=h, tail=t, doc_id=record.doc_id, rtype=record.rtype, source_mode=record.mode)
        for h, t in record.pairs
    ]


def _rows(
    rtypes: Sequence[RelationType], per_doc: Dict[Tuple[str, RelationType], EvalCounts]
) -> List[RelationMetrics]:
    return [relation_metrics(rt, (c for (_, r), c in per_doc.items() if r == rt)) for rt in rtypes]


def _macro(rows: Sequence[RelationMetrics]) -> Scores:
    return Scores.of(macro_average(rows)) if rows else Scores()


def evaluate_run(
    artifact: RunArtifact,
    gold: Iterable[GoldRelation],
    gold_doc_ids: Optional[Iterable[str]] = None,
    lenient: bool = False,
    generated_at: Optional[str] = None,
) -> EvalReport:
    """
    Score a run artifact against gold relations.

    EN: The gold slice is gold_doc_ids when given (documents without relations count), otherwise the
        documents cited by gold. Artifact documents outside the slice raise SliceMismatch; gold documents
        the artifact skipped are left out with a warning. Failed records score as empty predictions.
    FA: برش مرجع در صورت ارائه gold_doc_ids همان است (اسناد بدون رابطه هم حساب می‌شوند)، وگرنه اسناد
        موجود در روابط مرجع. اسناد خارج از برش خطای SliceMismatch می‌دهند؛ اسناد مرجعی که در اجرا نیستند
        با هشدار کنار گذاشته می‌شوند. رکوردهای ناموفق پیش‌بینی خالی حساب می‌شوند.
    """
    gold = list(gold)
    slice_ids = set(gold_doc_ids) if gold_doc_ids is not None else {g.doc_id for g in gold}
    run_docs = artifact.doc_ids
    outside = sorted(set(run_docs) - slice_ids)
    if outside:
        raise SliceMismatch(
            f"{len(outside)} artifact document(s) are not in the gold slice, e.g. {outside[0]}"
        )
    skipped = sorted(slice_ids - set(run_docs))
    if skipped:
        log_event(
            logger, "gold_documents_skipped", level=logging.WARNING, count=len(skipped), example=skipped[0]
        )

    rtypes = list(artifact.config.rtypes)
    gold_index: Dict[Tuple[str, RelationType], List[GoldRelation]] = {}
    for rel in gold:
        gold_index.setdefault((rel.doc_id, rel.rtype), []).append(rel)

    strict: Dict[Tuple[str, RelationType], EvalCounts] = {}
    loose: Dict[Tuple[str, RelationType], EvalCounts] = {}
    counts: List[DocumentCount] = []
    for record in artifact.records:
        key = (record.doc_id, record.rtype)
        pred = _predicted_pairs(record)
        expected = gold_index.get(key, [])
        strict[key] = strict.get(key, EvalCounts()) + score_document(pred, expected)
        lenient_tp = None
        if lenient:
            loose[key] = loose.get(key, EvalCounts()) + score_document(pred, expected, lenient=True)
            lenient_tp = loose[key].tp
        c = strict[key]
        counts.append(
            DocumentCount(
                doc_id=record.doc_id, rtype=record.rtype, tp=c.tp, fp=c.fp, fn=c.fn, lenient_tp=lenient_tp
            )
        )

    per_relation = _rows(rtypes, strict)
    cfg = artifact.config
    metadata = RunMetadata(
        mode=cfg.mode,
        model_id=cfg.model_id,
        corpus_path=str(cfg.corpus_path),
        corpus_slice=content_hash(sorted(run_docs)),
        document_count=len(run_docs),
        artifact_hash=artifact.content_hash,
        failed_records=len(artifact.failures),
        generated_at=generated_at,
    )
    report = EvalReport(
        metadata=metadata,
        per_relation=per_relation,
        macro_average=_macro(per_relation),
        micro=Scores.of(micro_metrics(strict.values())),
        document_counts=counts,
    )
    if lenient:
        lenient_rows = _rows(rtypes, loose)
        report.lenient_per_relation = lenient_rows
        report.lenient_macro_average = _macro(lenient_rows)
    log_event(
        logger, "run_evaluated", mode=cfg.mode, documents=len(run_docs),
        macro_f1=report.macro_average.f1, micro_f1=report.micro.f1,
    )
    return report


def _fmt(value: float) -> str:
    return f"{value:.{REPORT_DECIMALS}f}"


def render_report_table(report: EvalReport) -> str:
    """
    Plain-text table in the per-relation layout.

    EN: One row per relation with P / R / F1 and counts, then the macro "Average" and pooled "Micro" rows.
    FA: برای هر رابطه یک سطر با P / R / F1 و شمارش‌ها، سپس سطرهای Average (کلان) و Micro (خرد).
    """
    rows = []
    for r in report.per_relation:
        rows.append(
            [r.rtype.value, _fmt(r.precision), _fmt(r.recall), _fmt(r.f1),
             str(r.counts.tp), str(r.counts.fp), str(r.counts.fn)]
        )
    m = report.macro_average
    rows.append(["Average", _fmt(m.precision), _fmt(m.recall), _fmt(m.f1), "", "", ""])
    u = report.micro
    rows.append(["Micro", _fmt(u.precision), _fmt(u.recall), _fmt(u.f1), "", "", ""])
    frame = pd.DataFrame(rows, columns=["Relation", "P", "R", "F1", "TP", "FP", "FN"])
    meta = report.metadata
    title = f"{meta.model_id} / {meta.mode} ({meta.document_count:,} documents)"
    return title + "\n" + frame.to_string(index=False) + "\n"


def save_report(report: EvalReport, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    EN: Write report.json, report.txt and document_counts.parquet into out_dir.
    FA: فایل‌های report.json، report.txt و document_counts.parquet را در out_dir می‌نویسد.
    """
    out = Path(out_dir)
    ensure_dir(out)
    paths = {"json": out / REPORT_FILE, "table": out / TABLE_FILE, "counts": out / COUNTS_FILE}
    paths["json"].write_text(report.to_json() + "\n", encoding="utf-8")
    paths["table"].write_text(render_report_table(report), encoding="utf-8")
    frame = pd.DataFrame(
        [c.model_dump(mode="json") for c in report.document_counts],
        columns=["doc_id", "rtype", "tp", "fp", "fn", "lenient_tp"],
    )
    frame.to_parquet(paths["counts"], index=False)
    return paths


def load_report(path: Union[str, Path]) -> EvalReport:
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Missing report: {file_path}")
    return EvalReport.model_validate_json(file_path.read_text(encoding="utf-8"))


@dataclass
class RunComparison:
    """EN/FA: جدول مقایسه چند گزارش؛ ستون‌های اختلاف نسبت به گزارش اول محاسبه می‌شوند."""

    labels: List[str]
    frame: pd.DataFrame

    def to_text(self) -> str:
        shown = self.frame.copy()
        for col in shown.columns[1:]:
            shown[col] = shown[col].map(lambda v: f"{v:+.3f}" if col.startswith("Δ") else _fmt(v))
        return shown.to_string(index=False) + "\n"

    def to_records(self) -> Dict[str, object]:
        return {"labels": self.labels, "baseline": self.labels[0], "rows": self.frame.to_dict(orient="records")}

    def to_json(self) -> str:
        return json.dumps(self.to_records(), indent=2, ensure_ascii=False)


def _labels(reports: Sequence[EvalReport], labels: Optional[Sequence[str]]) -> List[str]:
    if labels is not None:
        if len(labels) != len(reports) or len(set(labels)) != len(labels):
            raise ValueError("labels must be distinct and one per report")
        return list(labels)
    out: List[str] = []
    for report in reports:
        base = f"{report.metadata.model_id}:{report.metadata.mode}"
        label, n = base, 2
        while label in out:
            label, n = f"{base}#{n}", n + 1
        out.append(label)
    return out


def compare_runs(reports: Sequence[EvalReport], labels: Optional[Sequence[str]] = None) -> RunComparison:
    """
    Side-by-side comparison of several reports.

    EN: One row per relation type present in any report plus an "Average" row; P/R/F1 per report and
        ΔP/ΔR/ΔF1 of every later report against the first.
    FA: برای هر نوع رابطه موجود در گزارش‌ها یک سطر و یک سطر Average؛ برای هر گزارش P/R/F1 و برای
        گزارش‌های بعدی اختلاف با گزارش اول.
    """
    if len(reports) < 2:
        raise ValueError("compare_runs needs at least two reports")
    names = _labels(reports, labels)
    present = {r.rtype for report in reports for r in report.per_relation}
    rtypes = [rt for rt in RelationType if rt in present]

    def _values(report: EvalReport, rtype: Optional[RelationType]) -> Tuple[float, float, float]:
        if rtype is None:
            s = report.macro_average
            return s.precision, s.recall, s.f1
        row = report.row(rtype)
        return (row.precision, row.recall, row.f1) if row else (0.0, 0.0, 0.0)

    rows = []
    for rtype in [*rtypes, None]:
        row: Dict[str, object] = {"relation": rtype.value if rtype else "Average"}
        base = _values(reports[0], rtype)
        for name, report in zip(names, reports):
            p, r, f = _values(report, rtype)
            row.update({f"{name} P": p, f"{name} R": r, f"{name} F1": f})
        for name, report in zip(names[1:], reports[1:]):
            p, r, f = _values(report, rtype)
            row.update({f"ΔP {name}": p - base[0], f"ΔR {name}": r - base[1], f"ΔF1 {name}": f - base[2]})
        rows.append(row)
    return RunComparison(labels=names, frame=pd.DataFrame(rows))


__all__ = [
    "REPORT_FILE",
    "TABLE_FILE",
    "COUNTS_FILE",
    "Scores",
    "RunMetadata",
    "DocumentCount",
    "EvalReport",
    "evaluate_run",
    "render_report_table",
    "save_report",
    "load_report",
    "RunComparison",
    "compare_runs",
]
