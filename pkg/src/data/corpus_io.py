"""
Corpus loading for the n2c2 standoff annotations and the ADE relation pairs.

EN: Reads documents and gold relations, converts both shapes to one canonical JSON-lines format,
    and counts relation instances per type.
FA: اسناد و روابط مرجع را می‌خواند، هر دو قالب را به یک قالب JSONL استاندارد تبدیل می‌کند
    و تعداد نمونه‌های هر نوع رابطه را می‌شمارد.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import pandas as pd

from src.data.schemas import (
    ADE_RELATIONS,
    N2C2_RELATIONS,
    SENTINEL_OFFSET,
    DatasetTag,
    Document,
    GoldEntity,
    GoldRelation,
    RelationType,
)
from src.errors import DanglingReference, OffsetMismatch, SchemaError, UnknownRelationType
from src.utils.io import read_jsonl, text_hash, write_jsonl
from src.utils.log import log_event, setup_logger
from src.utils.text import collapse_whitespace

logger = setup_logger("umls_extract.corpus")

Corpus = Tuple[List[Document], List[GoldRelation]]

# EN: Standoff line shapes; entity spans may be discontinuous ("10 14;20 25")
# FA: الگوی خطوط standoff؛ بازه موجودیت می‌تواند ناپیوسته باشد
_ENTITY_LINE = re.compile(r"^(T\d+)\t(\S+) (\d+ \d+(?:;\d+ \d+)*)\t(.*)$")
_RELATION_LINE = re.compile(r"^(R\d+)\t(\S+) Arg1:(T\d+) Arg2:(T\d+)\s*$")

# EN: ADE record keys for the non-drug argument of each relation type
# FA: کلید رکورد ADE برای آرگومان غیر دارویی هر نوع رابطه
_ADE_OTHER_KEYS = {"effect": RelationType.DRUG_ADE, "dosage": RelationType.DRUG_DOSAGE}


def _read_text(path: Path) -> str:
    # EN: newline="" keeps CRLF so offsets stay byte-for-byte with the annotation tool
    # FA: با newline="" پایان خط‌ها دست‌نخورده می‌مانند تا آفست‌ها درست باشند
    with path.open("r", encoding="utf-8", newline="") as f:
        return f.read()


def _surfaces_agree(expected: str, found: str) -> bool:
    # EN: Annotators flatten line breaks inside spans to spaces
    # FA: ابزار حاشیه‌نویسی شکست خط درون بازه را به فاصله تبدیل می‌کند
    return expected == found or collapse_whitespace(expected) == collapse_whitespace(found)


def _parse_fragments(offsets: str) -> List[Tuple[int, int]]:
    fragments = []
    for part in offsets.split(";"):
        start, end = part.split(" ")
        fragments.append((int(start), int(end)))
    return fragments


def _orient(
    rtype: RelationType, arg1: GoldEntity, arg2: GoldEntity, doc_id: str, line_no: Optional[int]
) -> Tuple[GoldEntity, GoldEntity]:
    """
    Put the arguments in (head, tail) order for the relation type.

    EN: n2c2 heads are the non-Drug argument even when the file lists the Drug as Arg1.
    FA: سر رابطه n2c2 همیشه آرگومان غیر دارویی است، حتی اگر فایل دارو را Arg1 گذاشته باشد.
    """
    if (arg1.label, arg2.label) == (rtype.head_label, rtype.tail_label):
        return arg1, arg2
    if (arg2.label, arg1.label) == (rtype.head_label, rtype.tail_label):
        return arg2, arg1
    raise SchemaError(
        f"{rtype.value} cannot relate {arg1.label} and {arg2.label}", doc_id, line_no
    )


def parse_standoff(doc: Document, ann_text: str) -> List[GoldRelation]:
    """
    Parse one standoff annotation file against its document.

    EN: T lines become entities (offsets validated), R lines become relations. Other record kinds
        (attributes, events, notes) and unsupported relation names are skipped.
    FA: خطوط T به موجودیت (با بررسی آفست) و خطوط R به رابطه تبدیل می‌شوند؛ سایر انواع خط و
        نام‌های رابطه ناشناخته نادیده گرفته می‌شوند.
    """
    entities: Dict[str, GoldEntity] = {}
    pending: List[Tuple[int, str, str, str, str]] = []

    for line_no, raw in enumerate(ann_text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        if line.startswith("T"):
            m = _ENTITY_LINE.match(line)
            if m is None:
                raise SchemaError(f"Unparseable entity line: {line!r}", doc.doc_id, line_no)
            entity_id, label, span_spec, surface = m.groups()
            fragments = _parse_fragments(span_spec)
            start, end = fragments[0][0], fragments[-1][1]
            if any(s < 0 or e > len(doc.text) or s >= e for s, e in fragments):
                raise OffsetMismatch(
                    f"{entity_id} span {span_spec} outside document of length {len(doc.text)}",
                    doc.doc_id,
                    line_no,
                )
            found = " ".join(doc.text[s:e] for s, e in fragments)
            if not _surfaces_agree(surface, found):
                raise OffsetMismatch(
                    f"{entity_id} surface {surface!r} does not match text {found!r}",
                    doc.doc_id,
                    line_no,
                )
            entities[entity_id] = GoldEntity(
                entity_id=entity_id, label=label, start=start, end=end, surface=found
            )
        elif line.startswith("R"):
            m = _RELATION_LINE.match(line)
            if m is None:
                raise SchemaError(f"Unparseable relation line: {line!r}", doc.doc_id, line_no)
            rel_id, rname, arg1, arg2 = m.groups()
            pending.append((line_no, rel_id, rname, arg1, arg2))
        else:
            logger.debug("Skipping standoff record %r in %s", line[:1], doc.doc_id)

    # EN: Relations are resolved after all T lines are read, so order in the file does not matter
    # FA: روابط پس از خواندن همه خطوط T حل می‌شوند تا ترتیب خطوط اهمیتی نداشته باشد
    relations: List[GoldRelation] = []
    for line_no, rel_id, rname, arg1, arg2 in pending:
        for arg in (arg1, arg2):
            if arg not in entities:
                raise DanglingReference(f"{rel_id} cites undefined entity {arg}", doc.doc_id, line_no)
        try:
            rtype = RelationType.parse(rname)
        except UnknownRelationType:
            log_event(logger, "relation_skipped", doc_id=doc.doc_id, line_no=line_no, rtype=rname)
            continue
        head, tail = _orient(rtype, entities[arg1], entities[arg2], doc.doc_id, line_no)
        relations.append(GoldRelation(doc_id=doc.doc_id, rtype=rtype, head=head, tail=tail))
    return relations


def load_standoff_corpus(
    text_dir: Union[str, Path], ann_dir: Optional[Union[str, Path]] = None
) -> Corpus:
    """
    Load a `.txt` + `.ann` standoff corpus.

    EN: doc_id is the file stem; documents are returned in sorted doc_id order.
    FA: شناسه سند همان نام فایل بدون پسوند است؛ اسناد به ترتیب شناسه برگردانده می‌شوند.
    """
    text_root = Path(text_dir)
    ann_root = Path(ann_dir) if ann_dir is not None else text_root
    if not text_root.is_dir():
        raise FileNotFoundError(f"Missing text directory: {text_root}")

    documents: List[Document] = []
    relations: List[GoldRelation] = []
    for text_path in sorted(text_root.glob("*.txt")):
        doc_id = text_path.stem
        ann_path = ann_root / f"{doc_id}.ann"
        if not ann_path.exists():
            raise FileNotFoundError(f"Missing annotation file for {doc_id}: {ann_path}")
        doc = Document(doc_id=doc_id, text=_read_text(text_path), dataset_tag="n2c2")
        documents.append(doc)
        relations.extend(parse_standoff(doc, _read_text(ann_path)))

    print(f"Standoff documents: {len(documents):,} | relations: {len(relations):,}")
    return documents, relations


def _ade_doc_id(record: Dict[str, Any], text: str) -> str:
    explicit = record.get("doc_id")
    if explicit:
        return str(explicit)
    # EN: ADE sentences carry no id; the text hash makes repeated sentences share one document
    # FA: جملات ADE شناسه ندارند؛ چکیده متن باعث می‌شود جملات تکراری یک سند مشترک داشته باشند
    return f"ade-{text_hash(text)[:16]}"


def _span_from_record(record: Dict[str, Any], key: str) -> Optional[Tuple[int, int, bool]]:
    """Return (start, end, strict) for an argument, or None when no span is supplied."""
    explicit = record.get(f"{key}_span")
    if explicit is not None:
        if not isinstance(explicit, (list, tuple)) or len(explicit) != 2:
            raise SchemaError(f"{key}_span must be [start, end]")
        return int(explicit[0]), int(explicit[1]), True
    indexes = record.get("indexes") or {}
    entry = indexes.get(key) if isinstance(indexes, dict) else None
    if entry and entry.get("start_char") and entry.get("end_char"):
        # EN: HuggingFace ade_corpus_v2 keeps one index list per argument; the first occurrence wins
        # FA: در ade_corpus_v2 برای هر آرگومان فهرستی از اندیس‌ها هست؛ اولین مورد انتخاب می‌شود
        return int(entry["start_char"][0]), int(entry["end_char"][0]), False
    return None


def _ade_entity(
    text: str, doc_id: str, entity_id: str, label: str, surface: str,
    span: Optional[Tuple[int, int, bool]], line_no: int,
) -> GoldEntity:
    if span is not None:
        start, end, strict = span
        in_bounds = 0 <= start < end <= len(text)
        if in_bounds and _surfaces_agree(surface, text[start:end]):
            return GoldEntity(
                entity_id=entity_id, label=label, start=start, end=end, surface=text[start:end]
            )
        if strict:
            raise OffsetMismatch(
                f"{label} surface {surface!r} does not match span [{start}, {end})", doc_id, line_no
            )
        log_event(logger, "ade_span_dropped", doc_id=doc_id, line_no=line_no, label=label)
    # EN/FA: بدون بازه معتبر، آفست نگهبان و تطبیق بر اساس رشته
    return GoldEntity(
        entity_id=entity_id, label=label, start=SENTINEL_OFFSET, end=SENTINEL_OFFSET, surface=surface
    )


def ade_relation_from_record(
    record: Dict[str, Any], line_no: int = 0
) -> Tuple[Document, GoldRelation]:
    """
    Convert one ADE record into its document and relation.

    EN: Needs text, drug and one of effect (Drug-ADE) or dosage (Drug-Dosage).
    FA: به متن، دارو و یکی از effect (Drug-ADE) یا dosage (Drug-Dosage) نیاز دارد.
    """
    missing = [k for k in ("text", "drug") if not str(record.get(k) or "").strip()]
    other_keys = [k for k in _ADE_OTHER_KEYS if str(record.get(k) or "").strip()]
    if missing or not other_keys:
        needed = missing + ([] if other_keys else ["effect|dosage"])
        raise SchemaError(f"ADE record missing {', '.join(needed)}", str(record.get("doc_id", "")), line_no)
    if len(other_keys) > 1:
        raise SchemaError("ADE record carries both effect and dosage", str(record.get("doc_id", "")), line_no)

    text = str(record["text"])
    doc_id = _ade_doc_id(record, text)
    other_key = other_keys[0]
    rtype = _ADE_OTHER_KEYS[other_key]
    drug = _ade_entity(
        text, doc_id, f"{doc_id}:{line_no}:drug", "Drug", str(record["drug"]).strip(),
        _span_from_record(record, "drug"), line_no,
    )
    other = _ade_entity(
        text, doc_id, f"{doc_id}:{line_no}:{other_key}", rtype.tail_label,
        str(record[other_key]).strip(), _span_from_record(record, other_key), line_no,
    )
    return (
        Document(doc_id=doc_id, text=text, dataset_tag="ade"),
        GoldRelation(doc_id=doc_id, rtype=rtype, head=drug, tail=other),
    )


def _collect(pairs: Iterable[Tuple[Document, GoldRelation]]) -> Corpus:
    documents: Dict[str, Document] = {}
    relations: List[GoldRelation] = []
    for doc, rel in pairs:
        documents.setdefault(doc.doc_id, doc)
        relations.append(rel)
    return list(documents.values()), relations


def load_ade_corpus(path: Union[str, Path]) -> Corpus:
    """
    Load ADE relation records from JSON lines.

    EN: One relation per record; documents are deduplicated by doc_id in first-seen order.
    FA: هر رکورد یک رابطه است؛ اسناد بر اساس شناسه و به ترتیب اولین مشاهده یکتا می‌شوند.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Missing ADE corpus: {file_path}")
    documents, relations = _collect(
        ade_relation_from_record(record, line_no)
        for line_no, record in enumerate(read_jsonl(file_path), start=1)
    )
    print(f"ADE documents: {len(documents):,} | relations: {len(relations):,}")
    return documents, relations


def _iter_rel_file(path: Path, other_key: str) -> Iterable[Tuple[Document, GoldRelation]]:
    with path.open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            cols = line.rstrip("\r\n").split("|")
            if len(cols) < 8:
                raise SchemaError(f"Expected 8 pipe-delimited columns, got {len(cols)}", path.name, line_no)
            # EN: PMID|sentence|other|start|end|drug|start|end; offsets point into the abstract,
            #     not the sentence, so they become sentinel spans
            # FA: آفست‌های این فایل‌ها مربوط به چکیده مقاله است نه جمله، پس آفست نگهبان می‌گیرند
            record = {"text": cols[1].strip(), other_key: cols[2], "drug": cols[5]}
            yield ade_relation_from_record(record, line_no)


def load_ade_rel_files(
    drug_ae_path: Union[str, Path], drug_dose_path: Optional[Union[str, Path]] = None
) -> Corpus:
    """
    EN: Reader for the original DRUG-AE.rel / DRUG-DOSE.rel distribution.
    FA: خواننده فایل‌های اصلی DRUG-AE.rel و DRUG-DOSE.rel.
    """
    def _all() -> Iterable[Tuple[Document, GoldRelation]]:
        yield from _iter_rel_file(Path(drug_ae_path), "effect")
        if drug_dose_path is not None:
            yield from _iter_rel_file(Path(drug_dose_path), "dosage")

    documents, relations = _collect(_all())
    print(f"ADE documents: {len(documents):,} | relations: {len(relations):,}")
    return documents, relations


def _entity_record(entity: GoldEntity) -> Dict[str, Any]:
    return {
        "entity_id": entity.entity_id,
        "label": entity.label,
        "start": entity.start,
        "end": entity.end,
        "surface": entity.surface,
    }


def write_canonical_corpus(
    documents: Sequence[Document], relations: Sequence[GoldRelation], path: Union[str, Path]
) -> int:
    """
    Write the canonical JSON-lines corpus.

    EN: Document records {doc_id, text, dataset_tag} come first, then relation records.
    FA: ابتدا رکوردهای سند و سپس رکوردهای رابطه نوشته می‌شوند.
    """
    def _records() -> Iterable[Dict[str, Any]]:
        for doc in documents:
            yield {"doc_id": doc.doc_id, "text": doc.text, "dataset_tag": doc.dataset_tag}
        for rel in relations:
            yield {
                "doc_id": rel.doc_id,
                "rtype": rel.rtype.value,
                "head": _entity_record(rel.head),
                "tail": _entity_record(rel.tail),
            }

    return write_jsonl(_records(), path)


def _entity_from_record(data: Any, doc: Document, line_no: int) -> GoldEntity:
    if not isinstance(data, dict):
        raise SchemaError("Relation argument must be an object", doc.doc_id, line_no)
    missing = [k for k in ("label", "start", "end", "surface") if k not in data]
    if missing:
        raise SchemaError(f"Entity missing {', '.join(missing)}", doc.doc_id, line_no)
    entity = GoldEntity(
        entity_id=str(data.get("entity_id", "")),
        label=str(data["label"]),
        start=int(data["start"]),
        end=int(data["end"]),
        surface=str(data["surface"]),
    )
    if entity.has_span:
        in_bounds = 0 <= entity.start < entity.end <= len(doc.text)
        window = doc.text[entity.start : entity.end] if in_bounds else ""
        if not in_bounds or not (
            _surfaces_agree(entity.surface, window) or _fragments_fit(entity.surface, window)
        ):
            raise OffsetMismatch(
                f"surface {entity.surface!r} does not match [{entity.start}, {entity.end})",
                doc.doc_id,
                line_no,
            )
    return entity


def _fragments_fit(surface: str, window: str) -> bool:
    # EN: Discontinuous entities store their fragments joined by one space
    # FA: موجودیت‌های ناپیوسته بخش‌هایشان را با یک فاصله به هم متصل ذخیره می‌کنند
    if not window.startswith(surface.split(" ")[0]) or not window.endswith(surface.split(" ")[-1]):
        return False
    pos = 0
    for part in surface.split(" "):
        found = window.find(part, pos)
        if found < 0:
            return False
        pos = found + len(part)
    return True


def read_canonical_corpus(path: Union[str, Path]) -> Corpus:
    """
    Read the canonical JSON-lines corpus written by write_canonical_corpus.

    EN: Relations citing an unknown doc_id raise DanglingReference.
    FA: رابطه‌ای که به سند ناشناخته اشاره کند خطای DanglingReference می‌دهد.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Missing corpus file: {file_path}")
    documents: Dict[str, Document] = {}
    relations: List[GoldRelation] = []
    for line_no, record in enumerate(read_jsonl(file_path), start=1):
        doc_id = str(record.get("doc_id", ""))
        if not doc_id:
            raise SchemaError("Record without doc_id", "", line_no)
        if "rtype" not in record:
            if "text" not in record:
                raise SchemaError("Document record without text", doc_id, line_no)
            if doc_id in documents:
                raise SchemaError("Duplicate document id", doc_id, line_no)
            documents[doc_id] = Document(
                doc_id=doc_id, text=record["text"], dataset_tag=record.get("dataset_tag", "other")
            )
            continue
        doc = documents.get(doc_id)
        if doc is None:
            raise DanglingReference("Relation cites a document not defined earlier", doc_id, line_no)
        rtype = RelationType.parse(str(record["rtype"]))
        head = _entity_from_record(record.get("head"), doc, line_no)
        tail = _entity_from_record(record.get("tail"), doc, line_no)
        try:
            relations.append(GoldRelation(doc_id=doc_id, rtype=rtype, head=head, tail=tail))
        except ValueError as exc:
            raise SchemaError(str(exc), doc_id, line_no) from exc
    return list(documents.values()), relations


CorpusFormat = Literal["auto", "standoff", "ade", "ade-rel", "canonical"]

# EN: Loader adapters by format name; new corpus shapes register here
# FA: مبدل‌های بارگذاری بر اساس نام قالب؛ قالب‌های جدید اینجا ثبت می‌شوند
LOADERS: Dict[str, Callable[[Path], Corpus]] = {
    "standoff": lambda p: load_standoff_corpus(p),
    "ade": load_ade_corpus,
    "ade-rel": lambda p: load_ade_rel_files(p),
    "canonical": read_canonical_corpus,
}


def detect_format(path: Union[str, Path]) -> str:
    """EN/FA: قالب پیکره را از روی مسیر و اولین رکورد حدس می‌زند."""
    file_path = Path(path)
    if file_path.is_dir():
        return "standoff"
    if file_path.suffix == ".rel":
        return "ade-rel"
    first = next(iter(read_jsonl(file_path)), {})
    if "drug" in first:
        return "ade"
    return "canonical"


def load_corpus(path: Union[str, Path], fmt: CorpusFormat = "auto") -> Corpus:
    """
    Load a corpus in any supported format.

    EN: fmt="auto" picks standoff for directories, ade-rel for .rel files and sniffs JSON lines.
    FA: در حالت auto پوشه‌ها standoff، فایل‌های .rel قالب ADE اصلی و JSONL با بررسی رکورد اول تشخیص داده می‌شوند.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Missing corpus: {file_path}")
    name = detect_format(file_path) if fmt == "auto" else fmt
    if name not in LOADERS:
        raise ValueError(f"Unknown corpus format: {fmt}")
    return LOADERS[name](file_path)


@dataclass
class CorpusStats:
    """
    Relation instance counts per type plus the number of documents.

    EN: counts always holds every RelationType (zeros included).
    FA: counts همیشه همه انواع رابطه را دارد (حتی با مقدار صفر).
    """

    counts: Dict[RelationType, int] = field(default_factory=lambda: {r: 0 for r in RelationType})
    documents: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def as_dict(self) -> Dict[str, int]:
        return {r.value: n for r, n in self.counts.items()}

    def as_frame(self, dataset: Optional[DatasetTag] = None) -> pd.DataFrame:
        """
        EN: Table layout with one row per relation pair and a closing Total row.
        FA: جدولی با یک سطر برای هر زوج رابطه و سطر پایانی Total.
        """
        rtypes = {"n2c2": N2C2_RELATIONS, "ade": ADE_RELATIONS}.get(dataset or "", tuple(RelationType))
        rows = [{"relation": r.value, "instances": self.counts[r]} for r in rtypes]
        rows.append({"relation": "Total", "instances": sum(self.counts[r] for r in rtypes)})
        return pd.DataFrame(rows, columns=["relation", "instances"])


def corpus_stats(
    relations: Iterable[GoldRelation], documents: Optional[Sequence[Document]] = None
) -> CorpusStats:
    """
    Count relation instances per type.

    EN: Document count is len(documents) when given, otherwise the distinct doc_ids among relations.
    FA: تعداد اسناد در صورت ارائه برابر len(documents) و در غیر این صورت تعداد شناسه‌های یکتای روابط است.
    """
    frame = pd.DataFrame(
        [(rel.doc_id, rel.rtype.value) for rel in relations], columns=["doc_id", "rtype"]
    )
    counts = (
        frame["rtype"].value_counts().reindex([r.value for r in RelationType], fill_value=0)
    )
    n_docs = len(documents) if documents is not None else int(frame["doc_id"].nunique())
    return CorpusStats(
        counts={RelationType(name): int(n) for name, n in counts.items()},
        documents=n_docs,
    )


__all__ = [
    "Corpus",
    "CorpusFormat",
    "CorpusStats",
    "parse_standoff",
    "load_standoff_corpus",
    "ade_relation_from_record",
    "load_ade_corpus",
    "load_ade_rel_files",
    "write_canonical_corpus",
    "read_canonical_corpus",
    "detect_format",
    "load_corpus",
    "LOADERS",
    "corpus_stats",
]
