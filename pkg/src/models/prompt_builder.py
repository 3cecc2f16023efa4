"""
Prompt construction for relation extraction.

EN: Loads the per-mode base templates, binds the entity word of a relation type and renders the final
    prompt: instructions, worked examples, the note and (umls mode) the mapped medication list.
FA: قالب‌های پایه هر حالت را بارگذاری می‌کند، واژه موجودیت نوع رابطه را جایگذاری می‌کند و پرامپت نهایی را
    می‌سازد: دستورالعمل، مثال‌ها، متن یادداشت و (در حالت umls) فهرست داروهای نگاشت‌شده.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, field_validator

from src.data.schemas import MODES, Document, Mode, RelationType
from src.errors import TemplateError
from src.models.concept_mapper import MedicationList
from src.models.output_parser import format_pairs
from src.utils.io import content_hash

PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")
KNOWN_PLACEHOLDERS = frozenset({"note_text", "medication_list", "entity_type", "examples"})
EMPTY_MEDICATIONS = "(none)"
DEFAULT_SHOTS = 2

# EN: Entity word substituted into the shared template for each relation's non-drug argument
# FA: واژه موجودیت که برای آرگومان غیر دارویی هر رابطه در قالب مشترک جایگذاری می‌شود
ENTITY_WORDS: Mapping[str, str] = {
    "Strength": "strength",
    "Duration": "duration",
    "Route": "route",
    "Form": "form",
    "ADE": "adverse drug event",
    "Dosage": "dosage",
    "Reason": "reason",
    "Frequency": "frequency",
}


def entity_word(rtype: RelationType) -> str:
    return ENTITY_WORDS[rtype.other_label]


class FewShotExample(BaseModel):
    """EN/FA: یک مثال حل‌شده: متن نمونه و زوج‌های مورد انتظار."""

    model_config = ConfigDict(frozen=True)

    example_text: str
    example_pairs: Tuple[Tuple[str, str], ...]

    @field_validator("example_pairs")
    @classmethod
    def _pairs_non_empty(cls, value):
        if not value:
            raise ValueError("few-shot example needs at least one pair")
        return value


class PromptTemplate(BaseModel):
    """
    A base template (target_rtype None) or one bound to a relation type.

    EN: Validated on construction: note_text exactly once, medication_list only in umls mode,
        no unknown placeholders.
    FA: هنگام ساخت بررسی می‌شود: note_text دقیقاً یک بار، medication_list فقط در حالت umls و
        بدون جای‌نگهدار ناشناخته.
    """

    model_config = ConfigDict(frozen=True)

    template_id: str
    mode: Mode
    body: str
    shots: Tuple[FewShotExample, ...] = ()
    target_rtype: Optional[RelationType] = None

    def model_post_init(self, __context: Any) -> None:
        validate_body(self.body, self.mode, self.template_id, bound=self.target_rtype is not None)

    @property
    def placeholders(self) -> List[str]:
        return sorted(set(PLACEHOLDER.findall(self.body)))


class RenderedPrompt(BaseModel):
    """
    EN: Final prompt text plus its identity (hash of text, mode and generation parameters).
    FA: متن نهایی پرامپت به همراه شناسه آن (چکیده متن، حالت و پارامترهای تولید).
    """

    model_config = ConfigDict(frozen=True)

    prompt_id: str
    text: str
    doc_id: str
    rtype: RelationType
    mode: Mode
    medication_terms: Tuple[str, ...] = ()
    template_id: str = ""
    params_fingerprint: str = ""


@dataclass
class TemplateLibrary:
    """One base template per mode and the shared bank of worked examples."""

    templates: Dict[str, PromptTemplate]
    shot_bank: List[Dict[str, Any]] = field(default_factory=list)
    shots_per_template: int = DEFAULT_SHOTS

    def __post_init__(self) -> None:
        missing = [m for m in MODES if m not in self.templates]
        if missing:
            raise TemplateError(f"Template library lacks modes: {', '.join(missing)}")


def validate_body(body: str, mode: str, template_id: str = "", bound: bool = False) -> None:
    found = PLACEHOLDER.findall(body)
    unknown = sorted(set(found) - KNOWN_PLACEHOLDERS)
    if unknown:
        raise TemplateError(f"{template_id}: unknown placeholders {unknown}")
    if found.count("note_text") != 1:
        raise TemplateError(f"{template_id}: {{note_text}} must appear exactly once")
    meds = found.count("medication_list")
    if meds > 1 or (mode != "umls" and meds):
        raise TemplateError(f"{template_id}: {{medication_list}} allowed once, umls mode only")
    if mode == "umls" and not meds:
        raise TemplateError(f"{template_id}: umls template needs a {{medication_list}} slot")
    if bound and "entity_type" in found:
        raise TemplateError(f"{template_id}: {{entity_type}} left unbound")


def compute_prompt_id(text: str, mode: str, params_fingerprint: str = "") -> str:
    """EN/FA: شناسه پرامپت = چکیده (متن، حالت، پارامترها)."""
    return content_hash({"text": text, "mode": mode, "params": params_fingerprint})


def _substitute(body: str, values: Mapping[str, str], template_id: str) -> str:
    # EN: One pass over the template only; inserted values are never rescanned
    # FA: فقط یک بار روی قالب پیمایش می‌شود؛ مقادیر درج‌شده دوباره پویش نمی‌شوند
    def _replace(m: "re.Match[str]") -> str:
        name = m.group(1)
        if name not in values:
            raise TemplateError(f"{template_id}: unresolved placeholder {{{name}}}")
        return values[name]

    return PLACEHOLDER.sub(_replace, body)


def _split_front_matter(raw: str, source: str) -> Tuple[Dict[str, Any], str]:
    if not raw.startswith("---\n"):
        raise TemplateError(f"{source}: missing front matter")
    end = raw.find("\n---\n", 4)
    if end < 0:
        raise TemplateError(f"{source}: unterminated front matter")
    meta = yaml.safe_load(raw[4:end]) or {}
    if not isinstance(meta, dict):
        raise TemplateError(f"{source}: front matter must be a mapping")
    return meta, raw[end + len("\n---\n"):]


def load_template_file(path: Union[str, Path]) -> Tuple[PromptTemplate, List[Dict[str, Any]]]:
    """
    Read one template file.

    EN: Front matter keys: template_id, mode, placeholders (must equal the body's set),
        and either inline `shots` or a `shots_file` next to the template.
    FA: کلیدهای سرآیند: template_id، mode، placeholders (باید با جای‌نگهدارهای متن برابر باشد)
        و shots درون‌خطی یا فایل shots_file در کنار قالب.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Missing template: {file_path}")
    meta, body = _split_front_matter(file_path.read_text(encoding="utf-8"), file_path.name)
    for key in ("template_id", "mode"):
        if key not in meta:
            raise TemplateError(f"{file_path.name}: front matter lacks {key}")
    template = PromptTemplate(template_id=str(meta["template_id"]), mode=meta["mode"], body=body)
    declared = sorted(meta.get("placeholders") or [])
    if declared != template.placeholders:
        raise TemplateError(
            f"{file_path.name}: declared placeholders {declared} differ from body {template.placeholders}"
        )
    shots = meta.get("shots")
    if shots is None and meta.get("shots_file"):
        shots_path = file_path.parent / str(meta["shots_file"])
        with shots_path.open("r", encoding="utf-8") as f:
            shots = (yaml.safe_load(f) or {}).get("shots", [])
    return template, list(shots or [])


def load_template_library(template_dir: Union[str, Path], shots_per_template: int = DEFAULT_SHOTS) -> TemplateLibrary:
    """EN/FA: قالب‌های baseline، umls و rag را از پوشه قالب‌ها می‌خواند."""
    root = Path(template_dir)
    templates: Dict[str, PromptTemplate] = {}
    bank: List[Dict[str, Any]] = []
    for mode in MODES:
        template, shots = load_template_file(root / f"{mode}.prompt")
        if template.mode != mode:
            raise TemplateError(f"{mode}.prompt declares mode {template.mode}")
        templates[mode] = template
        if not bank:
            bank = shots
    return TemplateLibrary(templates=templates, shot_bank=bank, shots_per_template=shots_per_template)


def _select_shots(bank: Sequence[Dict[str, Any]], word: str, limit: int) -> Tuple[FewShotExample, ...]:
    selected: List[FewShotExample] = []
    for entry in bank:
        pairs = (entry.get("pairs") or {}).get(word) or []
        if not pairs:
            continue
        selected.append(
            FewShotExample(
                example_text=str(entry["text"]).strip(),
                example_pairs=tuple((str(h), str(t)) for h, t in pairs),
            )
        )
        if len(selected) >= limit:
            break
    return tuple(selected)


def template_for(rtype: Union[RelationType, str], mode: Mode, library: TemplateLibrary) -> PromptTemplate:
    """
    Bind the mode's base template to a relation type.

    EN: Substitutes {entity_type} with the relation's entity word and picks the worked examples
        that carry pairs for that word.
    FA: {entity_type} را با واژه موجودیت رابطه جایگزین کرده و مثال‌هایی را که برای آن واژه زوج دارند برمی‌گزیند.
    """
    if not isinstance(rtype, RelationType):
        rtype = RelationType.parse(rtype)
    if mode not in library.templates:
        raise TemplateError(f"No template for mode {mode!r}")
    base = library.templates[mode]
    word = entity_word(rtype)
    # EN: Bind only entity_type; the other placeholders pass through untouched
    # FA: فقط entity_type جایگذاری می‌شود و بقیه جای‌نگهدارها دست‌نخورده می‌مانند
    body = PLACEHOLDER.sub(lambda m: word if m.group(1) == "entity_type" else m.group(0), base.body)
    return PromptTemplate(
        template_id=f"{base.template_id}:{rtype.value}",
        mode=base.mode,
        body=body,
        shots=_select_shots(library.shot_bank, word, library.shots_per_template),
        target_rtype=rtype,
    )


def render_examples(shots: Sequence[FewShotExample]) -> str:
    blocks = []
    for i, shot in enumerate(shots, start=1):
        blocks.append(f"Example {i}:\nNote: {shot.example_text}\nAnswer: {format_pairs(shot.example_pairs)}")
    return "\n\n".join(blocks)


def serialize_medications(meds: MedicationList) -> str:
    return ", ".join(meds.terms) if meds.terms else EMPTY_MEDICATIONS


def render(
    template: PromptTemplate,
    doc: Document,
    meds: Optional[MedicationList],
    mode: Mode,
    params_fingerprint: str = "",
) -> RenderedPrompt:
    """
    Render the final prompt for one document.

    EN: The note is inserted verbatim and never expanded. In baseline and rag modes meds is ignored.
    FA: متن یادداشت بدون تغییر درج می‌شود و هرگز بسط داده نمی‌شود. در حالت‌های baseline و rag داروها نادیده گرفته می‌شوند.
    """
    if template.target_rtype is None:
        raise TemplateError(f"{template.template_id}: bind a relation type with template_for() first")
    if template.mode != mode:
        raise TemplateError(f"{template.template_id} is a {template.mode} template, not {mode}")
    meds = meds if (mode == "umls" and meds is not None) else MedicationList()
    values = {"note_text": doc.text, "examples": render_examples(template.shots)}
    if mode == "umls":
        values["medication_list"] = serialize_medications(meds)
    text = _substitute(template.body, values, template.template_id)
    return RenderedPrompt(
        prompt_id=compute_prompt_id(text, mode, params_fingerprint),
        text=text,
        doc_id=doc.doc_id,
        rtype=template.target_rtype,
        mode=mode,
        medication_terms=tuple(meds.terms),
        template_id=template.template_id,
        params_fingerprint=params_fingerprint,
    )


__all__ = [
    "PLACEHOLDER",
    "KNOWN_PLACEHOLDERS",
    "EMPTY_MEDICATIONS",
    "ENTITY_WORDS",
    "entity_word",
    "FewShotExample",
    "PromptTemplate",
    "RenderedPrompt",
    "TemplateLibrary",
    "validate_body",
    "compute_prompt_id",
    "load_template_file",
    "load_template_library",
    "template_for",
    "render_examples",
    "serialize_medications",
    "render",
]
