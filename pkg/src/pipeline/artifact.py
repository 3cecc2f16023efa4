"""
Run configuration and run artifacts.

EN: RunConfig is loaded from one JSON document. A RunArtifact is a header line (config snapshot and
    content hash) followed by one JSON line per (document, relation type) record.
FA: RunConfig از یک سند JSON خوانده می‌شود. فایل اجرا شامل یک خط سرآیند (تصویر پیکربندی و چکیده محتوا)
    و سپس یک خط JSON برای هر رکورد (سند، نوع رابطه) است.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.config import TEMPLATE_DIR
from src.data.lexicon_ingest import DEFAULT_STY_NAMES, SemanticFilter
from src.data.schemas import N2C2_RELATIONS, Mode, RelationType
from src.errors import UnknownRelationType
from src.models.concept_mapper import DEFAULT_MIN_TERM_LENGTH
from src.models.llm_gateway import GPT4_32K, GenerationParams
from src.models.prompt_builder import DEFAULT_SHOTS
from src.models.rag_retriever import DEFAULT_TOP_K, QueryScope
from src.utils.io import content_hash, read_jsonl, write_jsonl

ARTIFACT_FORMAT = "umls-extract-run/v1"
ARTIFACT_FILE = "artifact.jsonl"
CACHE_FILE = "response_cache.jsonl"
CHUNKS_FILE = "chunks.jsonl"
INDEX_FILE = "index.jsonl"

CorpusFormatName = Literal["auto", "standoff", "ade", "ade-rel", "canonical"]


class RunConfig(BaseModel):
    """
    Configuration of one extraction run.

    EN: Paths are checked at run start, not at load time, so a config can be written before its inputs exist.
    FA: مسیرها هنگام شروع اجرا بررسی می‌شوند نه هنگام بارگذاری، تا بتوان پیکربندی را پیش از ورودی‌ها نوشت.
    """

    model_config = ConfigDict(frozen=True, extra="forbid", protected_namespaces=())

    mode: Mode
    model_id: str = GPT4_32K
    corpus_path: Path
    corpus_format: CorpusFormatName = "auto"
    output_dir: Path
    lexicon_path: Optional[Path] = None
    index_dir: Optional[Path] = None
    template_dir: Path = TEMPLATE_DIR
    rtypes: Tuple[RelationType, ...] = N2C2_RELATIONS
    params: GenerationParams = GenerationParams()
    system_message: str = ""
    parallelism: int = Field(4, ge=1)
    shots_per_template: int = Field(DEFAULT_SHOTS, ge=0)
    dedupe_pairs: bool = True
    min_term_length: int = Field(DEFAULT_MIN_TERM_LENGTH, ge=1)
    sty_names: Tuple[str, ...] = tuple(sorted(DEFAULT_STY_NAMES))
    tui_aliases: bool = True
    top_k: int = Field(DEFAULT_TOP_K, ge=1)
    query_scope: QueryScope = "prompt"
    embedder: Literal["hashing", "live"] = "hashing"
    embedding_ngram_range: Tuple[int, int] = (1, 3)
    mock_script: Optional[Path] = None
    cache_path: Optional[Path] = None

    @field_validator("rtypes", mode="before")
    @classmethod
    def _parse_rtypes(cls, value: Any) -> Any:
        if isinstance(value, (list, tuple)):
            return tuple(RelationType.parse(v) if isinstance(v, str) else v for v in value)
        return value

    @field_validator("rtypes")
    @classmethod
    def _rtypes_non_empty(cls, value: Tuple[RelationType, ...]) -> Tuple[RelationType, ...]:
        if not value:
            raise UnknownRelationType("rtypes must name at least one relation type")
        return value

    @property
    def artifact_path(self) -> Path:
        return self.output_dir / ARTIFACT_FILE

    @property
    def response_cache_path(self) -> Path:
        return self.cache_path or (self.output_dir / CACHE_FILE)

    def semantic_filter(self) -> SemanticFilter:
        base = SemanticFilter.default(with_tui_aliases=self.tui_aliases)
        aliases = {t: n for t, n in base.tui_aliases.items() if n in {s.casefold() for s in self.sty_names}}
        return SemanticFilter(frozenset(self.sty_names), aliases)

    def check_paths(self) -> None:
        """
        EN: Raise FileNotFoundError for any input the selected mode needs but cannot find.
        FA: برای هر ورودی لازم در حالت انتخاب‌شده که پیدا نشود FileNotFoundError می‌دهد.
        """
        required: List[Tuple[str, Optional[Path]]] = [
            ("corpus_path", self.corpus_path),
            ("template_dir", self.template_dir),
        ]
        if self.mode == "umls":
            required.append(("lexicon_path", self.lexicon_path))
        if self.mode == "rag":
            required.append(("index_dir", self.index_dir))
        if self.mock_script is not None:
            required.append(("mock_script", self.mock_script))
        for name, path in required:
            if path is None:
                raise FileNotFoundError(f"{self.mode} mode needs {name}")
            if not Path(path).exists():
                raise FileNotFoundError(f"Missing {name}: {path}")

    def snapshot(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def load_run_config(
    path: Union[str, Path],
    overrides: Optional[Dict[str, Any]] = None,
    defaults: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """
    EN: Read a RunConfig JSON document. defaults (YAML sections) fill missing keys and non-None
        overrides (CLI flags) replace fields.
    FA: سند JSON پیکربندی اجرا را می‌خواند. defaults (بخش‌های YAML) کلیدهای غایب را پر می‌کند و مقادیر
        غیر None در overrides (پرچم‌های CLI) جایگزین می‌شوند.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Missing run config: {file_path}")
    data = {**(defaults or {}), **json.loads(file_path.read_text(encoding="utf-8"))}
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig.model_validate(data)


class RunRecord(BaseModel):
    """
    EN: Everything one (document, relation type) step produced. error is set when the step failed.
    FA: هر آنچه یک گام (سند، نوع رابطه) تولید کرده است. در صورت شکست، error مقدار دارد.
    """

    model_config = ConfigDict(frozen=True)

    doc_id: str
    rtype: RelationType
    mode: Mode
    prompt_id: str = ""
    prompt: str = ""
    medication_terms: Tuple[str, ...] = ()
    retrieved_chunks: Tuple[Tuple[int, float], ...] = ()
    raw_response: str = ""
    finish_reason: str = ""
    pairs: Tuple[Tuple[str, str], ...] = ()
    diagnostics: Tuple[Tuple[str, str], ...] = ()
    error: Optional[str] = None


class RunArtifact(BaseModel):
    config: RunConfig
    records: List[RunRecord]

    @property
    def content_hash(self) -> str:
        return artifact_hash(self.config, self.records)

    @property
    def doc_ids(self) -> List[str]:
        seen: Dict[str, None] = {}
        for rec in self.records:
            seen.setdefault(rec.doc_id, None)
        return list(seen)

    @property
    def failures(self) -> List[RunRecord]:
        return [r for r in self.records if r.error is not None]

    def save(self, path: Union[str, Path]) -> int:
        """EN/FA: سرآیند و رکوردها را به صورت JSONL می‌نویسد و تعداد رکوردها را برمی‌گرداند."""
        header = {
            "kind": "header",
            "format": ARTIFACT_FORMAT,
            "config": self.config.snapshot(),
            "content_hash": self.content_hash,
            "record_count": len(self.records),
        }
        return write_jsonl([header, *(r.model_dump(mode="json") for r in self.records)], path) - 1


def artifact_hash(config: RunConfig, records: Iterable[RunRecord]) -> str:
    return content_hash(
        {"config": config.snapshot(), "records": [r.model_dump(mode="json") for r in records]}
    )


def load_artifact(path: Union[str, Path]) -> RunArtifact:
    """
    Load and verify a run artifact.

    EN: Raises ValueError when the header is missing or the stored hash differs from the content.
    FA: اگر سرآیند نباشد یا چکیده ذخیره‌شده با محتوا نخواند ValueError می‌دهد.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Missing run artifact: {file_path}")
    rows = list(read_jsonl(file_path))
    if not rows or rows[0].get("kind") != "header":
        raise ValueError(f"{file_path} has no artifact header")
    header, body = rows[0], rows[1:]
    artifact = RunArtifact(
        config=RunConfig.model_validate(header["config"]),
        records=[RunRecord.model_validate(r) for r in body],
    )
    if artifact.content_hash != header.get("content_hash"):
        raise ValueError(f"{file_path}: content hash mismatch")
    return artifact


__all__ = [
    "ARTIFACT_FORMAT",
    "ARTIFACT_FILE",
    "CACHE_FILE",
    "CHUNKS_FILE",
    "INDEX_FILE",
    "RunConfig",
    "load_run_config",
    "RunRecord",
    "RunArtifact",
    "artifact_hash",
    "load_artifact",
]
