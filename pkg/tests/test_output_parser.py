"""
Tests for parsing model completions.

EN: Tolerant tuple scanning, diagnostics, deduplication and a seeded fuzz check.
FA: پویش تحمل‌پذیر زوج‌ها، پیام‌های تشخیصی، حذف تکرار و یک آزمون تصادفی با seed ثابت.
"""

from __future__ import annotations

import random

from src.data.schemas import RelationType
from src.models.output_parser import format_pairs, parse_pairs, pairs_to_records

RT = RelationType.STRENGTH_DRUG


def _parse(raw: str, **kwargs):
    return parse_pairs(raw, "d1", RT, "baseline", **kwargs)


def _severities(outcome):
    return [d.severity for d in outcome.diagnostics]


def test_well_formed_list():
    outcome = _parse("[('aspirin', '81 mg'), (\"Plavix\", \"75 mg\")]")
    assert [p.as_pair() for p in outcome.pairs] == [("aspirin", "81 mg"), ("Plavix", "75 mg")]
    assert outcome.clean
    assert outcome.diagnostics == ()
    assert all(p.doc_id == "d1" and p.rtype == RT and p.source_mode == "baseline" for p in outcome.pairs)


def test_prose_and_typographic_quotes_are_tolerated():
    outcome = _parse("Here you go:\n[(‘aspirin’, ‘81 mg’), (“ASA”, “325”)]\nHope this helps.")
    assert pairs_to_records(outcome.pairs) == [["aspirin", "81 mg"], ["ASA", "325"]]
    assert outcome.clean
    assert "info" in _severities(outcome)


def test_missing_brackets_is_a_warning():
    outcome = _parse("('aspirin', '81 mg'), ('Cipro', '250 mg')")
    assert len(outcome.pairs) == 2
    assert _severities(outcome) == ["warning"]


def test_malformed_tuple_is_skipped_with_warning():
    outcome = _parse("[('aspirin', '81 mg'), ('Cipro' 250 mg), ('Plavix', '75 mg')]")
    assert [p.head for p in outcome.pairs] == ["aspirin", "Plavix"]
    assert any("malformed" in d.message for d in outcome.diagnostics)


def test_apostrophe_inside_double_quotes():
    outcome = _parse("[(\"Tylenol Children's\", '160 mg')]")
    assert outcome.pairs[0].head == "Tylenol Children's"


def test_empty_list_is_not_an_error():
    outcome = _parse("[]")
    assert outcome.pairs == ()
    assert outcome.clean
    assert _severities(outcome) == ["info"]


def test_empty_or_garbage_completion_is_an_error():
    assert not _parse("").clean
    assert not _parse("   ").clean
    garbage = _parse("I cannot find any medications.")
    assert not garbage.clean
    assert garbage.pairs == ()


def test_empty_elements_are_dropped():
    outcome = _parse("[('', '81 mg'), ('aspirin', '  ')]")
    assert outcome.pairs == ()
    assert not outcome.clean


def test_duplicates_collapse_after_normalization():
    raw = "[('Aspirin', '81 mg'), ('aspirin ', '81  MG'), ('aspirin', '81 mg')]"
    deduped = _parse(raw)
    assert [p.as_pair() for p in deduped.pairs] == [("Aspirin", "81 mg")]
    assert any("duplicate" in d.message for d in deduped.diagnostics)
    assert len(_parse(raw, dedupe=False).pairs) == 3


def test_format_then_parse_recovers_random_pairs():
    rng = random.Random(20240601)
    alphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-./%'\",\\’“"

    def element() -> str:
        return " ".join(
            "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 8))) for _ in range(rng.randint(1, 3))
        )

    for _ in range(300):
        pairs = [(element(), element()) for _ in range(rng.randint(1, 6))]
        outcome = _parse(format_pairs(pairs), dedupe=False)
        assert [p.as_pair() for p in outcome.pairs] == pairs
        assert outcome.diagnostics == ()


def test_parser_never_raises_on_mutated_input():
    rng = random.Random(100_000)
    seeds = [
        "[('aspirin', '81 mg'), ('Plavix', '75 mg')]",
        "Answer: [(\"ASA\", \"325\")] done",
        "[]",
        "('Cipro', '250 mg'",
    ]
    noise = "()[]'\",  \n‘’“”abc81"
    for _ in range(100_000):
        chars = list(rng.choice(seeds))
        for _ in range(rng.randint(0, 6)):
            op = rng.randrange(3)
            pos = rng.randrange(len(chars) + 1)
            if op == 0:
                chars.insert(pos, rng.choice(noise))
            elif chars and pos < len(chars):
                if op == 1:
                    del chars[pos]
                else:
                    chars[pos] = rng.choice(noise)
        outcome = _parse("".join(chars))
        assert all(p.head and p.tail for p in outcome.pairs)
        assert outcome.pairs or outcome.diagnostics


def test_values_with_both_quote_kinds_round_trip():
    pairs = [('5 mg "Bob\'s"', "aspirin"), ("C:\\tmp\\'x'", "it's \"fine\""), ("‘curly’ “dose”", "line\nbreak")]
    text = format_pairs(pairs)
    outcome = _parse(text, dedupe=False)
    assert [p.as_pair() for p in outcome.pairs] == pairs
    assert outcome.diagnostics == ()
