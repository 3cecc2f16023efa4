"""
Concept mapping over clinical text.

EN: Deterministic leftmost-longest dictionary matcher (pyahocorasick) that finds lexicon terms in a
    document, plus the semantic-type filter that turns matches into the medication list.
FA: تطبیق‌دهنده واژه‌نامه‌ای قطعی (چپ‌ترین-بلندترین با pyahocorasick) که واژه‌های واژه‌نامه را در سند
    پیدا می‌کند، و فیلتر نوع معنایی که تطبیق‌ها را به فهرست داروها تبدیل می‌کند.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Protocol, Sequence, Tuple, runtime_checkable

import ahocorasick

from src.data.lexicon_ingest import ConceptLexicon, SemanticFilter
from src.data.schemas import Document
from src.utils.log import log_event, setup_logger
from src.utils.text import fold_case, normalize_term

logger = setup_logger("umls_extract.mapper")

DEFAULT_MIN_TERM_LENGTH = 2


@dataclass(frozen=True, slots=True)
class ConceptMatch:
    """
    One mapped occurrence.

    EN: [start, end) are offsets into Document.text and text[start:end] == surface.
    FA: بازه [start, end) آفست‌هایی در متن سند است و text[start:end] برابر surface است.
    """

    surface: str
    start: int
    end: int
    cui: str
    sty_name: str

    def to_record(self) -> Dict[str, object]:
        return {
            "surface": self.surface,
            "start": self.start,
            "end": self.end,
            "cui": self.cui,
            "sty": self.sty_name,
        }


@dataclass(frozen=True)
class MedicationList:
    """
    Filtered medication concepts for one document.

    EN: terms are distinct by normalization and sorted by normalized form; the first surface seen wins.
    FA: واژه‌ها پس از نرمال‌سازی یکتا و بر اساس شکل نرمال مرتب‌اند؛ اولین شکل دیده‌شده نگه داشته می‌شود.
    """

    terms: Tuple[str, ...] = ()
    matches: Tuple[ConceptMatch, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.terms)


@runtime_checkable
class ConceptMapperProvider(Protocol):
    """
    EN: Anything that maps a document to concept matches (dictionary matcher today, MetaMap adapter later).
    FA: هر پیاده‌سازی که سند را به تطبیق‌های مفهومی نگاشت کند (امروز واژه‌نامه، بعدها MetaMap).
    """

    def map_concepts(self, doc: Document) -> List[ConceptMatch]:
        ...


def _is_word_char(ch: str) -> bool:
    return ch.isalnum()


def _is_boundary(text: str, pos: int) -> bool:
    left = pos > 0 and _is_word_char(text[pos - 1])
    right = pos < len(text) and _is_word_char(text[pos])
    return left != right


def _boundary_ok(text: str, start: int, end: int) -> bool:
    """
    EN: Both ends of a match must sit where exactly one neighbouring character is alphanumeric;
        text edges count as non-alphanumeric.
    FA: هر دو سر تطبیق باید جایی باشند که دقیقاً یکی از دو نویسه مجاور حرف یا رقم است؛
        ابتدا و انتهای متن غیر حرفی-رقمی حساب می‌شوند.
    """
    return _is_boundary(text, start) and _is_boundary(text, end)


class LexiconConceptMapper:
    """
    Dictionary matcher built on an Aho-Corasick automaton.

    EN: Keys are the normalized lexicon terms; the text is case-folded without changing its length,
        so automaton offsets are offsets into the original text.
    FA: کلیدها واژه‌های نرمال‌شده واژه‌نامه‌اند؛ متن بدون تغییر طول به حروف کوچک تبدیل می‌شود،
        پس آفست‌های خودکاره همان آفست‌های متن اصلی است.
    """

    def __init__(self, lexicon: ConceptLexicon, min_term_length: int = DEFAULT_MIN_TERM_LENGTH) -> None:
        if min_term_length < 1:
            raise ValueError("min_term_length must be >= 1")
        self.lexicon = lexicon
        self.min_term_length = min_term_length
        self._automaton = ahocorasick.Automaton()
        self._size = 0
        for term, concepts in lexicon.entries.items():
            if len(term) < self.min_term_length:
                continue
            # EN: Tie rule: smallest CUI, then smallest semantic type name of that CUI
            # FA: قاعده تساوی: کوچک‌ترین CUI و سپس کوچک‌ترین نام نوع معنایی همان CUI
            cui, sty_name = min(concepts)
            self._automaton.add_word(term, (len(term), cui, sty_name))
            self._size += 1
        if self._size:
            self._automaton.make_automaton()

    def __len__(self) -> int:
        return self._size

    def candidates(self, text: str) -> Iterator[Tuple[int, int, str, str]]:
        """EN/FA: همه رخدادهای واژه‌ها با رعایت مرز کلمه (شامل هم‌پوشان‌ها)."""
        if not self._size:
            return
        folded = fold_case(text)
        for end_idx, (length, cui, sty_name) in self._automaton.iter(folded):
            end = end_idx + 1
            start = end - length
            if _boundary_ok(text, start, end):
                yield start, end, cui, sty_name

    def map_concepts(self, doc: Document) -> List[ConceptMatch]:
        """
        Leftmost-longest, non-overlapping matches ordered by start offset.

        EN: Candidates are sorted by (start, -length) and picked greedily.
        FA: نامزدها بر اساس (شروع، منفی طول) مرتب و به صورت حریصانه انتخاب می‌شوند.
        """
        text = doc.text
        ordered = sorted(self.candidates(text), key=lambda c: (c[0], -(c[1] - c[0])))
        matches: List[ConceptMatch] = []
        last_end = 0
        for start, end, cui, sty_name in ordered:
            if start < last_end:
                continue
            matches.append(ConceptMatch(text[start:end], start, end, cui, sty_name))
            last_end = end
        return matches

    def map_and_filter(self, doc: Document, semantic_filter: Optional[SemanticFilter] = None) -> MedicationList:
        return filter_matches(self.map_concepts(doc), semantic_filter or SemanticFilter.default())


# EN: One automaton per lexicon, reused across calls of map_concepts
# FA: برای هر واژه‌نامه یک خودکاره ساخته و بین فراخوانی‌ها استفاده مجدد می‌شود
_MAPPERS: "weakref.WeakKeyDictionary[ConceptLexicon, LexiconConceptMapper]" = weakref.WeakKeyDictionary()


def mapper_for(lexicon: ConceptLexicon) -> LexiconConceptMapper:
    mapper = _MAPPERS.get(lexicon)
    if mapper is None:
        mapper = LexiconConceptMapper(lexicon)
        _MAPPERS[lexicon] = mapper
    return mapper


def map_concepts(doc: Document, lexicon: ConceptLexicon) -> List[ConceptMatch]:
    """
    Map lexicon terms occurring in a document.

    EN: Case-insensitive, word-boundary aligned, leftmost-longest and non-overlapping.
    FA: بدون حساسیت به حروف، هم‌تراز با مرز کلمه، چپ‌ترین-بلندترین و بدون هم‌پوشانی.
    """
    return mapper_for(lexicon).map_concepts(doc)


def filter_matches(matches: Sequence[ConceptMatch], semantic_filter: SemanticFilter) -> MedicationList:
    """
    Keep medication matches and build the deduplicated term list.

    EN: Pure subset operation; applying it to its own output changes nothing.
    FA: یک عمل زیرمجموعه‌گیری خالص است؛ اعمال دوباره آن روی خروجی خودش تغییری ایجاد نمی‌کند.
    """
    kept = tuple(m for m in matches if semantic_filter.accepts_name(m.sty_name))
    by_norm: Dict[str, str] = {}
    for match in kept:
        by_norm.setdefault(normalize_term(match.surface), match.surface)
    terms = tuple(by_norm[key] for key in sorted(by_norm))
    return MedicationList(terms=terms, matches=kept)


def map_corpus(
    docs: Iterable[Document],
    mapper: ConceptMapperProvider,
    semantic_filter: Optional[SemanticFilter] = None,
) -> Iterator[Dict[str, object]]:
    """
    EN: One record per document: doc_id, matches and the medication list.
    FA: برای هر سند یک رکورد شامل شناسه، تطبیق‌ها و فهرست داروها.
    """
    semantic_filter = semantic_filter or SemanticFilter.default()
    for doc in docs:
        matches = mapper.map_concepts(doc)
        meds = filter_matches(matches, semantic_filter)
        log_event(
            logger, "concepts_mapped", doc_id=doc.doc_id, match_count=len(matches), medication_count=len(meds)
        )
        yield {
            "doc_id": doc.doc_id,
            "matches": [m.to_record() for m in matches],
            "medication_list": list(meds.terms),
        }


__all__ = [
    "DEFAULT_MIN_TERM_LENGTH",
    "ConceptMatch",
    "MedicationList",
    "ConceptMapperProvider",
    "LexiconConceptMapper",
    "mapper_for",
    "map_concepts",
    "filter_matches",
    "map_corpus",
]
