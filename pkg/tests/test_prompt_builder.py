"""
Tests for prompt templates and rendering.

EN: Template validation, relation binding, medication list insertion and prompt identity.
FA: اعتبارسنجی قالب، اتصال نوع رابطه، درج فهرست داروها و شناسه پرامپت را بررسی می‌کند.
"""

from __future__ import annotations

import random

import pytest

from src.config import TEMPLATE_DIR
from src.data.schemas import Document, RelationType
from src.models.concept_mapper import LexiconConceptMapper, MedicationList
from src.models.prompt_builder import (
    EMPTY_MEDICATIONS,
    entity_word,
    serialize_medications,
    PromptTemplate,
    load_template_library,
    render,
    template_for,
)
from src.errors import TemplateError
from tests.conftest import NOTE_TEXT, UMLS_MARKER


@pytest.fixture(scope="module")
def library():
    return load_template_library(TEMPLATE_DIR)


def _doc(text: str = NOTE_TEXT) -> Document:
    return Document(doc_id="note-001", text=text)


def test_library_holds_one_template_per_mode(library):
    assert set(library.templates) == {"baseline", "umls", "rag"}
    assert library.shot_bank


def test_template_for_binds_entity_word_and_shots(library):
    template = template_for(RelationType.STRENGTH_DRUG, "baseline", library)
    assert "{entity_type}" not in template.body
    assert "strength information" in template.body
    assert template.target_rtype == RelationType.STRENGTH_DRUG
    assert 1 <= len(template.shots) <= library.shots_per_template

    ade = template_for("Drug-ADE", "baseline", library)
    assert "adverse drug event" in ade.body
    assert all(shot.example_pairs for shot in ade.shots)


def test_umls_prompt_lists_mapped_medications(library, mini_lexicon):
    meds = LexiconConceptMapper(mini_lexicon).map_and_filter(_doc())
    prompt = render(template_for("Strength-Drug", "umls", library), _doc(), meds, "umls")
    assert UMLS_MARKER in prompt.text
    assert "ASA, aspirin, Cipro, metoprolol tartrate, Plavix, prednisone" in prompt.text
    assert prompt.medication_terms == meds.terms
    assert prompt.text.count(NOTE_TEXT) == 1


def test_umls_prompt_without_medications_says_none(library):
    prompt = render(template_for("Route-Drug", "umls", library), _doc("No drugs were given."), None, "umls")
    assert EMPTY_MEDICATIONS in prompt.text
    assert prompt.medication_terms == ()


def test_baseline_prompt_ignores_medications(library, mini_lexicon):
    meds = LexiconConceptMapper(mini_lexicon).map_and_filter(_doc())
    prompt = render(template_for("Strength-Drug", "baseline", library), _doc(), meds, "baseline")
    assert UMLS_MARKER not in prompt.text
    assert prompt.medication_terms == ()


def test_note_text_is_inserted_verbatim(library):
    tricky = "Patient wrote {medication_list} and {note_text} in the form."
    prompt = render(template_for("Form-Drug", "umls", library), _doc(tricky), None, "umls")
    assert tricky in prompt.text


def test_prompt_id_tracks_text_mode_and_params(library):
    template = template_for("Strength-Drug", "baseline", library)
    a = render(template, _doc(), None, "baseline", params_fingerprint="p1")
    b = render(template, _doc(), None, "baseline", params_fingerprint="p1")
    c = render(template, _doc(), None, "baseline", params_fingerprint="p2")
    assert a.prompt_id == b.prompt_id
    assert a.prompt_id != c.prompt_id


def test_render_requires_bound_template_of_same_mode(library):
    with pytest.raises(TemplateError):
        render(library.templates["baseline"], _doc(), None, "baseline")
    with pytest.raises(TemplateError):
        render(template_for("Strength-Drug", "baseline", library), _doc(), None, "umls")


@pytest.mark.parametrize(
    "mode, body",
    [
        ("baseline", "No note slot here."),
        ("baseline", "{note_text} {note_text}"),
        ("baseline", "{note_text} {medication_list}"),
        ("umls", "{note_text} only"),
        ("rag", "{note_text} {unknown_slot}"),
    ],
)
def test_invalid_template_bodies_are_rejected(mode, body):
    with pytest.raises(ValueError):
        PromptTemplate(template_id="t", mode=mode, body=body)


def test_missing_template_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_template_library(tmp_path)


NOTE_WORDS = ["aspirin", "81", "mg", "PO", "daily", "Answer:", "{medication_list}", "\n", "Plavix", "held", "."]
MED_TERMS = ["aspirin", "Plavix", "metoprolol tartrate", "Cipro", "ASA", "warfarin"]


def test_umls_prompt_is_baseline_plus_one_medication_block(library):
    rng = random.Random(5)
    for _ in range(200):
        rtype = rng.choice(list(RelationType))
        doc = _doc(" ".join(rng.choices(NOTE_WORDS, k=rng.randint(1, 30))))
        meds = MedicationList(terms=tuple(rng.sample(MED_TERMS, rng.randint(0, len(MED_TERMS)))))

        baseline = render(template_for(rtype, "baseline", library), doc, meds, "baseline").text
        umls = render(template_for(rtype, "umls", library), doc, meds, "umls").text

        at = baseline.rindex("Answer:")
        block = (
            f"{UMLS_MARKER} (include their {entity_word(rtype)} information too):\n"
            f"{serialize_medications(meds)}\n\n"
        )
        assert umls == baseline[:at] + block + baseline[at:]
