"""
Lexicon ingestion module for UMLS RRF files.

EN: Stream-parses MRCONSO.RRF / MRSTY.RRF and builds a filtered, normalized medication lexicon.
FA: فایل‌های MRCONSO.RRF و MRSTY.RRF را به صورت جریانی می‌خواند و واژه‌نامه دارویی فیلترشده و نرمال‌شده می‌سازد.
"""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import (
    Dict,
    FrozenSet,
    Iterable,
    Iterator,
    List,
    Literal,
    Mapping,
    Optional,
    Set,
    Tuple,
    Union,
)

from src.errors import EmptyLexicon, LexiconCacheError, MalformedRow
from src.utils.io import content_hash, read_jsonl, write_jsonl
from src.utils.log import log_event, setup_logger
from src.utils.text import normalize_term

logger = setup_logger("umls_extract.lexicon")

# EN: Identifier shapes and RRF column positions
# FA: الگوی شناسه‌ها و شماره ستون‌ها در فایل‌های RRF
CUI_PATTERN = re.compile(r"^C\d{7}$")
TUI_PATTERN = re.compile(r"^T\d{3}$")
CONSO_MIN_FIELDS = 17
STY_MIN_FIELDS = 4
CONSO_CUI, CONSO_LAT, CONSO_SAB, CONSO_STR, CONSO_SUPPRESS = 0, 1, 11, 14, 16
STY_CUI, STY_TUI, STY_NAME = 0, 1, 3

# EN: The three medication semantic types and their TUIs
# FA: سه نوع معنایی دارویی و شناسه‌های TUI آن‌ها
DEFAULT_STY_NAMES: FrozenSet[str] = frozenset(
    {"Organic Chemical", "Antibiotic", "Pharmacologic Substance"}
)
DEFAULT_TUI_ALIASES: Mapping[str, str] = MappingProxyType(
    {"T109": "Organic Chemical", "T195": "Antibiotic", "T121": "Pharmacologic Substance"}
)

CACHE_FORMAT = "umls-lexicon/v1"

ConceptKey = Tuple[str, str]


@dataclass(frozen=True, slots=True)
class ConceptRow:
    """EN/FA: یک رکورد MRCONSO (فقط ستون‌های مورد نیاز)."""

    cui: str
    language: str
    source_vocab: str
    term: str
    suppress: str


@dataclass(frozen=True, slots=True)
class SemanticTypeRow:
    """EN/FA: یک رکورد MRSTY."""

    cui: str
    tui: str
    sty_name: str


@dataclass(frozen=True)
class SemanticFilter:
    """
    Semantic-type filter.

    EN: Names compare case-insensitively; TUI aliases map a TUI to one of the allowed names.
        Accepted rows store the configured spelling of their type, whichever way they matched.
    FA: نام‌ها بدون حساسیت به حروف مقایسه می‌شوند؛ نام مستعار TUI آن را به یکی از نام‌های مجاز نگاشت می‌کند.
        ردیف‌های پذیرفته‌شده، از هر راهی که تطبیق یابند، املای پیکربندی‌شده نوع را ذخیره می‌کنند.
    """

    allowed_sty_names: FrozenSet[str] = DEFAULT_STY_NAMES
    tui_aliases: Mapping[str, str] = field(default_factory=dict)
    spellings: Mapping[str, str] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        spellings: Dict[str, str] = {}
        for name in sorted(n.strip() for n in self.allowed_sty_names if n.strip()):
            spellings.setdefault(name.casefold(), name)
        if not spellings:
            raise ValueError("SemanticFilter needs at least one semantic type name")
        aliases = {t.strip().upper(): n.strip().casefold() for t, n in dict(self.tui_aliases).items()}
        for tui, name in aliases.items():
            if not TUI_PATTERN.match(tui):
                raise ValueError(f"Invalid TUI alias: {tui!r}")
            if name not in spellings:
                raise ValueError(f"TUI alias {tui} targets {name!r}, which is not an allowed name")
        object.__setattr__(self, "allowed_sty_names", frozenset(spellings.values()))
        object.__setattr__(self, "spellings", MappingProxyType(spellings))
        object.__setattr__(self, "tui_aliases", MappingProxyType(aliases))

    @classmethod
    def default(cls, with_tui_aliases: bool = True) -> "SemanticFilter":
        return cls(DEFAULT_STY_NAMES, DEFAULT_TUI_ALIASES if with_tui_aliases else {})

    def accepts_name(self, sty_name: str) -> bool:
        return sty_name.strip().casefold() in self.spellings

    def canonical_name(self, sty_name: str, tui: str = "") -> Optional[str]:
        """
        EN: Name to store for an accepted MRSTY row, or None when the row is filtered out.
        FA: نامی که برای ردیف پذیرفته‌شده ذخیره می‌شود، یا None اگر ردیف فیلتر شود.
        """
        if self.accepts_name(sty_name):
            return self.spellings[sty_name.strip().casefold()]
        alias = self.tui_aliases.get(tui.strip().upper())
        if alias is not None:
            return self.spellings[alias]
        return None

    def to_config(self) -> Dict[str, object]:
        return {
            "allowed_sty_names": sorted(self.allowed_sty_names),
            "tui_aliases": dict(sorted(self.tui_aliases.items())),
        }


@dataclass(frozen=True)
class LexiconBuildOptions:
    """EN/FA: گزینه‌های ساخت واژه‌نامه (زبان، پرچم‌های حذف، رفتار در برابر ردیف خراب)."""

    languages: FrozenSet[str] = frozenset({"ENG"})
    excluded_suppress: FrozenSet[str] = frozenset({"O", "E", "Y"})
    on_malformed: Literal["skip", "abort"] = "skip"

    def keeps(self, row: ConceptRow) -> bool:
        return row.language in self.languages and row.suppress not in self.excluded_suppress

    def to_config(self) -> Dict[str, object]:
        return {
            "languages": sorted(self.languages),
            "excluded_suppress": sorted(self.excluded_suppress),
            "normalization": "casefold+trim+collapse-ws+strip-trailing-period",
        }


@dataclass
class ParseStats:
    """Tally of rows read and skipped while streaming an RRF file."""

    rows: int = 0
    skipped: int = 0
    first_error: Optional[str] = None


def _split_rrf(line: str) -> List[str]:
    return line.rstrip("\r\n").split("|")


def parse_conso_line(line: str, line_no: Optional[int] = None) -> ConceptRow:
    """
    Parse one MRCONSO.RRF record.

    EN: cui=field 0, language=1, source_vocab=11, term=14, suppress=16; trailing pipe tolerated.
    FA: ستون‌های ۰، ۱، ۱۱، ۱۴ و ۱۶ را برمی‌دارد؛ خط لوله انتهایی مشکلی ایجاد نمی‌کند.
    """
    fields = _split_rrf(line)
    if len(fields) < CONSO_MIN_FIELDS:
        raise MalformedRow(
            f"MRCONSO record has {len(fields)} fields, expected at least {CONSO_MIN_FIELDS}", line_no
        )
    cui = fields[CONSO_CUI]
    if not CUI_PATTERN.match(cui):
        raise MalformedRow(f"Invalid CUI {cui!r}", line_no)
    term = fields[CONSO_STR]
    if not term.strip():
        raise MalformedRow(f"Empty term for {cui}", line_no)
    return ConceptRow(
        cui=cui,
        language=fields[CONSO_LAT],
        source_vocab=fields[CONSO_SAB],
        term=term,
        suppress=fields[CONSO_SUPPRESS],
    )


def parse_sty_line(line: str, line_no: Optional[int] = None) -> SemanticTypeRow:
    """
    Parse one MRSTY.RRF record.

    EN: cui=field 0, tui=field 1, sty_name=field 3.
    FA: ستون ۰ شناسه مفهوم، ستون ۱ شناسه نوع معنایی و ستون ۳ نام نوع معنایی است.
    """
    fields = _split_rrf(line)
    if len(fields) < STY_MIN_FIELDS:
        raise MalformedRow(
            f"MRSTY record has {len(fields)} fields, expected at least {STY_MIN_FIELDS}", line_no
        )
    cui, tui = fields[STY_CUI], fields[STY_TUI]
    if not CUI_PATTERN.match(cui):
        raise MalformedRow(f"Invalid CUI {cui!r}", line_no)
    if not TUI_PATTERN.match(tui):
        raise MalformedRow(f"Invalid TUI {tui!r}", line_no)
    return SemanticTypeRow(cui=cui, tui=tui, sty_name=fields[STY_NAME])


def _iter_rows(path, parser, on_malformed, stats):
    with Path(path).open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            stats.rows += 1
            try:
                yield parser(line, line_no)
            except MalformedRow as exc:
                if on_malformed == "abort":
                    raise
                # EN: Skip-and-count corrupt rows; the first message is kept for the summary
                # FA: ردیف‌های خراب شمرده و رد می‌شوند؛ اولین پیام برای گزارش نگه داشته می‌شود
                stats.skipped += 1
                if stats.first_error is None:
                    stats.first_error = str(exc)


def iter_conso_rows(
    path: Union[str, Path],
    on_malformed: Literal["skip", "abort"] = "skip",
    stats: Optional[ParseStats] = None,
) -> Iterator[ConceptRow]:
    """EN/FA: ردیف‌های MRCONSO را به صورت جریانی برمی‌گرداند."""
    return _iter_rows(path, parse_conso_line, on_malformed, stats or ParseStats())


def iter_sty_rows(
    path: Union[str, Path],
    on_malformed: Literal["skip", "abort"] = "skip",
    stats: Optional[ParseStats] = None,
) -> Iterator[SemanticTypeRow]:
    """EN/FA: ردیف‌های MRSTY را به صورت جریانی برمی‌گرداند."""
    return _iter_rows(path, parse_sty_line, on_malformed, stats or ParseStats())


class ConceptLexicon:
    """
    Immutable normalized term → {(cui, sty_name)} mapping.

    EN: Built once by build_lexicon, then shared read-only across threads.
    FA: یک بار با build_lexicon ساخته می‌شود و سپس به صورت فقط‌خواندنی بین نخ‌ها به اشتراک گذاشته می‌شود.
    """

    def __init__(self, entries: Mapping[str, Iterable[ConceptKey]], build_config: Dict[str, object]) -> None:
        frozen: Dict[str, FrozenSet[ConceptKey]] = {}
        for term in sorted(entries):
            if normalize_term(term) != term:
                raise ValueError(f"Lexicon key {term!r} is not normalized")
            concepts = frozenset((str(c), str(s)) for c, s in entries[term])
            if concepts:
                frozen[term] = concepts
        self._entries: Mapping[str, FrozenSet[ConceptKey]] = MappingProxyType(frozen)
        self.build_config: Dict[str, object] = dict(build_config)
        self._hash: Optional[str] = None

    @property
    def entries(self) -> Mapping[str, FrozenSet[ConceptKey]]:
        return self._entries

    @property
    def term_count(self) -> int:
        return len(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, term: object) -> bool:
        return isinstance(term, str) and term in self._entries

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConceptLexicon):
            return NotImplemented
        return dict(self._entries) == dict(other._entries)

    def __hash__(self) -> int:
        return hash(self.content_hash())

    def lookup(self, term: str) -> FrozenSet[ConceptKey]:
        """EN/FA: مفاهیم مرتبط با شکل نرمال‌شده یک واژه را برمی‌گرداند."""
        return self._entries.get(normalize_term(term), frozenset())

    def cuis(self) -> Set[str]:
        return {cui for concepts in self._entries.values() for cui, _ in concepts}

    def _records(self) -> List[Dict[str, object]]:
        return [
            {"term": term, "concepts": [list(pair) for pair in sorted(concepts)]}
            for term, concepts in self._entries.items()
        ]

    def content_hash(self) -> str:
        if self._hash is None:
            self._hash = content_hash(self._records())
        return self._hash

    def save(self, path: Union[str, Path]) -> int:
        """
        Save the lexicon as a JSON-lines cache.

        EN: A header record (format, build_config, hash, term_count) precedes one record per term.
        FA: یک رکورد سرآیند (قالب، تنظیمات ساخت، چکیده، تعداد واژه) پیش از رکورد هر واژه نوشته می‌شود.
        """
        records = self._records()
        header = {
            "kind": "header",
            "format": CACHE_FORMAT,
            "build_config": self.build_config,
            "content_hash": content_hash(records),
            "term_count": len(records),
        }
        return write_jsonl([header, *records], path) - 1

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ConceptLexicon":
        """
        Load a lexicon cache written by save().

        EN: Verifies the header and the content hash before returning.
        FA: پیش از بازگرداندن، سرآیند و چکیده محتوا را بررسی می‌کند.
        """
        file_path = Path(path)
        if not file_path.exists():
            raise FileNotFoundError(f"Missing lexicon cache: {file_path}")
        records = iter(read_jsonl(file_path))
        header = next(records, None)
        if not header or header.get("kind") != "header" or header.get("format") != CACHE_FORMAT:
            raise LexiconCacheError(f"{file_path} is not a {CACHE_FORMAT} cache")
        entries: Dict[str, List[ConceptKey]] = {}
        for record in records:
            entries[record["term"]] = [tuple(pair) for pair in record["concepts"]]  # type: ignore[misc]
        lexicon = cls(entries, header.get("build_config", {}))
        if lexicon.content_hash() != header.get("content_hash"):
            raise LexiconCacheError(f"Content hash mismatch in {file_path}")
        return lexicon


def build_lexicon(
    conso: Iterable[ConceptRow],
    sty: Iterable[SemanticTypeRow],
    semantic_filter: Optional[SemanticFilter] = None,
    opts: Optional[LexiconBuildOptions] = None,
) -> ConceptLexicon:
    """
    Build the filtered medication lexicon.

    EN: Reads MRSTY first, keeping CUI→type only for allowed types, then streams MRCONSO.
        Memory is bounded by the filtered output plus that CUI→type map.
    FA: ابتدا MRSTY را خوانده و فقط نگاشت CUI به نوع مجاز را نگه می‌دارد، سپس MRCONSO را جریانی می‌خواند.
    """
    semantic_filter = semantic_filter or SemanticFilter.default()
    opts = opts or LexiconBuildOptions()

    # EN: CUI → accepted semantic type names (filtered types only)
    # FA: نگاشت CUI به نام انواع معنایی پذیرفته‌شده (فقط انواع فیلترشده)
    cui_types: Dict[str, Set[str]] = defaultdict(set)
    for row in sty:
        name = semantic_filter.canonical_name(row.sty_name, row.tui)
        if name is not None:
            cui_types[row.cui].add(name)

    entries: Dict[str, Set[ConceptKey]] = defaultdict(set)
    kept_rows = 0
    for row in conso:
        if not opts.keeps(row):
            continue
        types = cui_types.get(row.cui)
        if not types:
            continue
        term = normalize_term(row.term)
        if not term:
            continue
        kept_rows += 1
        # EN: Duplicate synonyms merge into one set under the normalized term
        # FA: مترادف‌های تکراری زیر واژه نرمال‌شده در یک مجموعه ادغام می‌شوند
        entries[term].update((row.cui, name) for name in types)

    if not entries:
        raise EmptyLexicon(
            "No terms survived filtering; check the semantic filter and the MRCONSO/MRSTY files"
        )

    build_config = {"filter": semantic_filter.to_config(), "options": opts.to_config()}
    lexicon = ConceptLexicon(entries, build_config)
    log_event(
        logger,
        "lexicon_built",
        term_count=lexicon.term_count,
        concept_count=len(lexicon.cuis()),
        kept_rows=kept_rows,
        filtered_cuis=len(cui_types),
    )
    return lexicon


def build_lexicon_from_files(
    conso_path: Union[str, Path],
    sty_path: Union[str, Path],
    semantic_filter: Optional[SemanticFilter] = None,
    opts: Optional[LexiconBuildOptions] = None,
) -> Tuple[ConceptLexicon, ParseStats, ParseStats]:
    """
    Run the full ingestion from RRF files.

    EN: Returns the lexicon and the parse tallies of both files.
    FA: واژه‌نامه و آمار خواندن هر دو فایل را برمی‌گرداند.
    """
    opts = opts or LexiconBuildOptions()
    conso_stats, sty_stats = ParseStats(), ParseStats()
    lexicon = build_lexicon(
        iter_conso_rows(conso_path, opts.on_malformed, conso_stats),
        iter_sty_rows(sty_path, opts.on_malformed, sty_stats),
        semantic_filter,
        opts,
    )
    print(f"MRSTY rows: {sty_stats.rows:,} (skipped {sty_stats.skipped:,})")
    print(f"MRCONSO rows: {conso_stats.rows:,} (skipped {conso_stats.skipped:,})")
    print(f"Lexicon terms: {lexicon.term_count:,}")
    return lexicon, conso_stats, sty_stats


def medication_cuis(
    sty_path: Union[str, Path],
    semantic_filter: Optional[SemanticFilter] = None,
    on_malformed: Literal["skip", "abort"] = "skip",
) -> Set[str]:
    """EN/FA: شناسه مفاهیمی که نوع معنایی آن‌ها از فیلتر عبور می‌کند (همان مجموعه‌ای که واژه‌نامه می‌سازد)."""
    semantic_filter = semantic_filter or SemanticFilter.default()
    return {
        row.cui
        for row in iter_sty_rows(sty_path, on_malformed)
        if semantic_filter.canonical_name(row.sty_name, row.tui) is not None
    }


def iter_conso_lines(
    path: Union[str, Path],
    cuis: Optional[Set[str]] = None,
    opts: Optional[LexiconBuildOptions] = None,
) -> Iterator[str]:
    """
    Yield raw MRCONSO lines for retrieval chunking.

    EN: Line terminators are preserved. With cuis=None every well-formed row passes (unfiltered mode).
    FA: پایان خط حفظ می‌شود. اگر cuis برابر None باشد همه ردیف‌های سالم عبور می‌کنند (حالت بدون فیلتر).
    """
    opts = opts or LexiconBuildOptions()
    with Path(path).open("r", encoding="utf-8", newline="") as f:
        for line_no, line in enumerate(f, start=1):
            if cuis is None:
                if line.strip():
                    yield line
                continue
            try:
                row = parse_conso_line(line, line_no)
            except MalformedRow:
                continue
            if row.cui in cuis and opts.keeps(row):
                yield line


__all__ = [
    "CUI_PATTERN",
    "TUI_PATTERN",
    "DEFAULT_STY_NAMES",
    "DEFAULT_TUI_ALIASES",
    "ConceptRow",
    "SemanticTypeRow",
    "SemanticFilter",
    "LexiconBuildOptions",
    "ParseStats",
    "ConceptLexicon",
    "parse_conso_line",
    "parse_sty_line",
    "iter_conso_rows",
    "iter_sty_rows",
    "build_lexicon",
    "build_lexicon_from_files",
    "medication_cuis",
    "iter_conso_lines",
]
