"""
Tests for dictionary concept mapping.

EN: Boundary rule, leftmost-longest selection, semantic filtering and a brute-force oracle.
FA: قاعده مرز کلمه، انتخاب چپ‌ترین-بلندترین، فیلتر معنایی و مقایسه با پیاده‌سازی ساده.
"""

from __future__ import annotations

import random
from collections import defaultdict
from typing import Dict, List, Tuple

import pytest

from src.data.lexicon_ingest import ConceptLexicon, SemanticFilter
from src.data.schemas import Document
from src.models.concept_mapper import LexiconConceptMapper, filter_matches, map_concepts, map_corpus
from tests.conftest import NOTE_TEXT


def _doc(text: str, doc_id: str = "d1") -> Document:
    return Document(doc_id=doc_id, text=text)


def test_match_offsets_slice_the_original_text(mini_lexicon):
    doc = _doc("Started ASPIRIN and Plavix today.")
    matches = map_concepts(doc, mini_lexicon)
    assert [m.surface for m in matches] == ["ASPIRIN", "Plavix"]
    for m in matches:
        assert doc.text[m.start : m.end] == m.surface


def test_term_inside_a_longer_word_is_not_matched(mini_lexicon):
    matches = map_concepts(_doc("Yoga asanas help; ASA 325 given."), mini_lexicon)
    assert [(m.surface, m.start) for m in matches] == [("ASA", 18)]


def test_terms_with_punctuated_edges_need_an_alphanumeric_neighbour():
    lexicon = ConceptLexicon(
        {
            "asa": [("C0000001", "Pharmacologic Substance")],
            "(asa)": [("C0000002", "Pharmacologic Substance")],
            "asa+": [("C0000003", "Pharmacologic Substance")],
        },
        {},
    )
    matches = map_concepts(_doc("took (ASA) then ASA+ daily"), lexicon)
    assert [(m.surface, m.start, m.cui) for m in matches] == [("ASA", 6, "C0000001"), ("ASA", 16, "C0000001")]

    (match,) = map_concepts(_doc("ASA+1"), lexicon)
    assert (match.surface, match.cui) == ("ASA+", "C0000003")


def test_longest_match_wins_at_the_same_start(mini_lexicon):
    matches = map_concepts(_doc("metoprolol tartrate 50 mg"), mini_lexicon)
    assert [m.surface for m in matches] == ["metoprolol tartrate"]


def test_min_term_length_drops_short_terms():
    lexicon = ConceptLexicon({"a": [("C0000001", "Antibiotic")], "ab": [("C0000002", "Antibiotic")]}, {})
    mapper = LexiconConceptMapper(lexicon, min_term_length=2)
    assert len(mapper) == 1
    assert [m.surface for m in mapper.map_concepts(_doc("a ab"))] == ["ab"]
    with pytest.raises(ValueError):
        LexiconConceptMapper(lexicon, min_term_length=0)


def test_ambiguous_term_resolves_to_smallest_cui():
    lexicon = ConceptLexicon(
        {"cold": [("C0000009", "Antibiotic"), ("C0000003", "Organic Chemical"), ("C0000003", "Antibiotic")]}, {}
    )
    (match,) = map_concepts(_doc("cold"), lexicon)
    assert (match.cui, match.sty_name) == ("C0000003", "Antibiotic")


def test_medication_list_of_discharge_note(mini_lexicon):
    """
    EN: Diseases are filtered out; terms are unique by normalization and sorted.
    FA: بیماری‌ها حذف می‌شوند؛ واژه‌ها پس از نرمال‌سازی یکتا و مرتب‌اند.
    """
    mapper = LexiconConceptMapper(mini_lexicon)
    meds = mapper.map_and_filter(_doc(NOTE_TEXT), SemanticFilter.default())
    assert meds.terms == ("ASA", "aspirin", "Cipro", "metoprolol tartrate", "Plavix", "prednisone")
    assert all(m.sty_name != "Disease or Syndrome" for m in meds.matches)


def test_filter_is_idempotent_and_keeps_first_surface(mini_lexicon):
    doc = _doc("Aspirin at night, aspirin in the morning, hypertension.")
    matches = map_concepts(doc, mini_lexicon)
    once = filter_matches(matches, SemanticFilter.default())
    twice = filter_matches(once.matches, SemanticFilter.default())
    assert once == twice
    assert once.terms == ("Aspirin",)
    assert len(once.matches) == 2


def test_map_corpus_yields_one_record_per_document(mini_lexicon):
    docs = [_doc("Plavix 75 mg", "a"), _doc("no drugs here", "b")]
    records = list(map_corpus(docs, LexiconConceptMapper(mini_lexicon)))
    assert [r["doc_id"] for r in records] == ["a", "b"]
    assert records[0]["medication_list"] == ["Plavix"]
    assert records[1]["matches"] == []


def _boundary_ok(text: str, start: int, end: int) -> bool:
    def edge(pos: int) -> bool:
        return (pos > 0 and text[pos - 1].isalnum()) != (pos < len(text) and text[pos].isalnum())

    return edge(start) and edge(end)


def _brute_force(text: str, by_first: Dict[str, List[str]]) -> List[Tuple[int, int]]:
    folded = text.lower()
    spans: List[Tuple[int, int]] = []
    i = 0
    while i < len(text):
        best = 0
        for term in by_first.get(folded[i], ()):
            if len(term) > best and folded.startswith(term, i) and _boundary_ok(text, i, i + len(term)):
                best = len(term)
        if best:
            spans.append((i, i + best))
            i += best
        else:
            i += 1
    return spans


def test_matches_agree_with_brute_force_oracle():
    """
    EN: 500 random documents over a 200-term lexicon built from a tiny alphabet, so overlaps are common.
    FA: ۵۰۰ سند تصادفی با واژه‌نامه ۲۰۰ واژه‌ای از الفبای کوچک تا هم‌پوشانی زیاد باشد.
    """
    rng = random.Random(7)

    def word() -> str:
        return "".join(rng.choice("abcde") for _ in range(rng.randint(1, 4)))

    terms = set()
    while len(terms) < 200:
        term = " ".join(word() for _ in range(rng.randint(1, 2)))
        if len(term) >= 2:
            terms.add(term)
    lexicon = ConceptLexicon({t: [(f"C{i:07d}", "Antibiotic")] for i, t in enumerate(sorted(terms))}, {})
    mapper = LexiconConceptMapper(lexicon)
    by_first: Dict[str, List[str]] = defaultdict(list)
    for term in terms:
        by_first[term[0]].append(term)

    for n in range(500):
        pieces = []
        for _ in range(rng.randint(3, 12)):
            w = word()
            pieces.append(w.upper() if rng.random() < 0.2 else w)
            pieces.append(rng.choice([" ", " ", ", ", "-", "."]))
        text = "".join(pieces)
        got = [(m.start, m.end) for m in mapper.map_concepts(_doc(text, f"doc{n}"))]
        assert got == _brute_force(text, by_first), text
