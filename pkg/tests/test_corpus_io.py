"""
Tests for corpus loading.

EN: Standoff parsing, ADE records, the canonical JSON-lines format and relation counts.
FA: تجزیه standoff، رکوردهای ADE، قالب استاندارد JSONL و شمارش روابط را بررسی می‌کند.
"""

from __future__ import annotations

import os
from pathlib import Path

import pytest

from src.data.corpus_io import (
    ade_relation_from_record,
    corpus_stats,
    detect_format,
    load_ade_corpus,
    load_ade_rel_files,
    load_corpus,
    load_standoff_corpus,
    parse_standoff,
    read_canonical_corpus,
    write_canonical_corpus,
)
from src.data.schemas import SENTINEL_OFFSET, Document, RelationType
from src.errors import DanglingReference, OffsetMismatch, SchemaError
from src.utils.io import write_jsonl
from tests.conftest import NOTE_TEXT, strength_gold

TEXT = "Take aspirin 81 mg by mouth daily.\nStop lisinopril due to cough."
ANN = (
    "T1\tDrug 5 12\taspirin\n"
    "T2\tStrength 13 18\t81 mg\n"
    "T3\tRoute 19 27\tby mouth\n"
    "T4\tDrug 40 50\tlisinopril\n"
    "T5\tADE 58 63\tcough\n"
    "R1\tStrength-Drug Arg1:T2 Arg2:T1\n"
    "R2\tRoute-Drug Arg1:T1 Arg2:T3\n"
    "R3\tADE-Drug Arg1:T5 Arg2:T4\n"
    "R4\tSomething-Else Arg1:T5 Arg2:T4\n"
    "A1\tNegated T5\n"
)


def test_parse_standoff_orients_heads_to_the_non_drug_argument():
    doc = Document(doc_id="100", text=TEXT)
    relations = parse_standoff(doc, ANN)
    assert [r.rtype for r in relations] == [
        RelationType.STRENGTH_DRUG,
        RelationType.ROUTE_DRUG,
        RelationType.ADE_DRUG,
    ]
    route = relations[1]
    assert (route.head.label, route.tail.label) == ("Route", "Drug")
    assert route.as_pair() == ("aspirin", "by mouth")
    assert relations[2].as_pair() == ("lisinopril", "cough")


def test_discontinuous_span_joins_fragments():
    doc = Document(doc_id="d", text="aspirin twice (every) day")
    ann = "T1\tFrequency 8 13;22 25\ttwice day\nT2\tDrug 0 7\taspirin\nR1\tFrequency-Drug Arg1:T1 Arg2:T2\n"
    (rel,) = parse_standoff(doc, ann)
    assert rel.head.surface == "twice day"
    assert (rel.head.start, rel.head.end) == (8, 25)


def test_dangling_reference_and_offset_mismatch():
    doc = Document(doc_id="d", text=TEXT)
    with pytest.raises(DanglingReference):
        parse_standoff(doc, "T1\tDrug 5 12\taspirin\nR1\tStrength-Drug Arg1:T9 Arg2:T1\n")
    with pytest.raises(OffsetMismatch) as exc:
        parse_standoff(doc, "T1\tDrug 5 12\tibuprofen\n")
    assert exc.value.doc_id == "d" and exc.value.line_no == 1
    with pytest.raises(SchemaError):
        parse_standoff(doc, "T1\tDrug 5 12\taspirin\nT2\tDrug 40 50\tlisinopril\nR1\tStrength-Drug Arg1:T1 Arg2:T2\n")


def test_load_standoff_corpus_keeps_crlf_offsets(tmp_path: Path):
    (tmp_path / "b.txt").write_bytes(b"Line one\r\nTake Plavix 75 mg.")
    (tmp_path / "b.ann").write_text("T1\tDrug 15 21\tPlavix\nT2\tStrength 22 27\t75 mg\nR1\tStrength-Drug Arg1:T2 Arg2:T1\n")
    (tmp_path / "a.txt").write_text("nothing annotated")
    (tmp_path / "a.ann").write_text("")
    docs, relations = load_standoff_corpus(tmp_path)
    assert [d.doc_id for d in docs] == ["a", "b"]
    assert relations[0].as_pair() == ("Plavix", "75 mg")
    assert load_corpus(tmp_path)[1] == relations


def test_ade_record_uses_index_spans_or_falls_back_to_sentinels():
    text = "Pseudoporphyria caused by naproxen."
    doc, rel = ade_relation_from_record(
        {
            "text": text,
            "drug": "naproxen",
            "effect": "Pseudoporphyria",
            "indexes": {"drug": {"start_char": [26], "end_char": [34]}, "effect": {"start_char": [5], "end_char": [9]}},
        },
        line_no=1,
    )
    assert rel.rtype == RelationType.DRUG_ADE
    assert (rel.head.start, rel.head.end) == (26, 34)
    assert rel.tail.start == SENTINEL_OFFSET
    assert rel.as_pair() == ("naproxen", "Pseudoporphyria")
    assert doc.doc_id.startswith("ade-")


def test_ade_record_validation():
    with pytest.raises(SchemaError):
        ade_relation_from_record({"text": "x", "drug": "y"})
    with pytest.raises(SchemaError):
        ade_relation_from_record({"text": "x", "drug": "y", "effect": "z", "dosage": "w"})
    with pytest.raises(OffsetMismatch):
        ade_relation_from_record({"text": "abc def", "drug": "abc", "dosage": "def", "drug_span": [0, 2]})


def test_ade_corpus_shares_documents_between_records(tmp_path: Path):
    text = "Rash after 500 mg amoxicillin."
    path = tmp_path / "ade.jsonl"
    write_jsonl(
        [
            {"text": text, "drug": "amoxicillin", "effect": "Rash"},
            {"text": text, "drug": "amoxicillin", "dosage": "500 mg"},
        ],
        path,
    )
    docs, relations = load_ade_corpus(path)
    assert len(docs) == 1
    assert [r.rtype for r in relations] == [RelationType.DRUG_ADE, RelationType.DRUG_DOSAGE]
    assert detect_format(path) == "ade"


def test_canonical_round_trip(tmp_path: Path):
    doc = Document(doc_id="note-001", text=NOTE_TEXT, dataset_tag="n2c2")
    gold = strength_gold()
    path = tmp_path / "canonical.jsonl"
    assert write_canonical_corpus([doc], gold, path) == 1 + len(gold)
    assert detect_format(path) == "canonical"
    assert read_canonical_corpus(path) == ([doc], gold)


def test_canonical_reader_rejects_unknown_document(tmp_path: Path):
    path = tmp_path / "bad.jsonl"
    gold = strength_gold()[0]
    write_jsonl([{"doc_id": "other", "rtype": "Strength-Drug", "head": gold.head.model_dump(),
                  "tail": gold.tail.model_dump()}], path)
    with pytest.raises(DanglingReference):
        read_canonical_corpus(path)


def test_corpus_stats_table_has_every_pair_and_total():
    stats = corpus_stats(strength_gold())
    assert stats.documents == 1
    assert stats.counts[RelationType.STRENGTH_DRUG] == 11
    assert stats.counts[RelationType.DRUG_ADE] == 0
    frame = stats.as_frame("n2c2")
    assert list(frame["relation"]) == [r.value for r in RelationType if r.dataset == "n2c2"] + ["Total"]
    assert frame["instances"].iloc[-1] == 11


@pytest.mark.skipif(not os.environ.get("UMLS_EXTRACT_N2C2_CORPUS"), reason="n2c2 corpus not available")
def test_n2c2_relation_counts():
    _, relations = load_corpus(os.environ["UMLS_EXTRACT_N2C2_CORPUS"])
    counts = corpus_stats(relations).as_dict()
    assert counts["Strength-Drug"] == 13338
    assert counts["Duration-Drug"] == 643
    assert counts["Route-Drug"] == 11038
    assert counts["Form-Drug"] == 6636
    assert counts["ADE-Drug"] == 2214
    assert counts["Dosage-Drug"] == 4207
    assert counts["Reason-Drug"] == 5160
    assert counts["Frequency-Drug"] == 6288


@pytest.mark.skipif(not os.environ.get("UMLS_EXTRACT_ADE_CORPUS"), reason="ADE corpus not available")
def test_ade_relation_counts():
    _, relations = load_corpus(os.environ["UMLS_EXTRACT_ADE_CORPUS"])
    counts = corpus_stats(relations).as_dict()
    assert counts["Drug-ADE"] == 6821
    assert counts["Drug-Dosage"] == 279


def test_original_rel_files(tmp_path: Path):
    sentence = "Intravenous azithromycin-induced ototoxicity."
    ae = tmp_path / "DRUG-AE.rel"
    ae.write_text(f"10030778|{sentence}|ototoxicity|43|54|azithromycin|22|34\n\n", encoding="utf-8")
    dose = tmp_path / "DRUG-DOSE.rel"
    dose.write_text(f"10030778|{sentence}|Intravenous|0|11|azithromycin|22|34\n", encoding="utf-8")

    docs, relations = load_ade_rel_files(ae, dose)
    assert len(docs) == 1 and docs[0].text == sentence
    assert [r.rtype for r in relations] == [RelationType.DRUG_ADE, RelationType.DRUG_DOSAGE]
    assert relations[0].as_pair() == ("azithromycin", "ototoxicity")
    assert detect_format(ae) == "ade-rel"
    assert load_corpus(ae)[1] == relations[:1]

    short = tmp_path / "short.rel"
    short.write_text("1|text|effect\n", encoding="utf-8")
    with pytest.raises(SchemaError):
        load_ade_rel_files(short)
