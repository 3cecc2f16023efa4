"""
Parser for model completions shaped as a list of quoted pairs.

EN: Turns text like "[('aspirin', '81 mg'), ('Plavix', '75 mg')]" into ExtractedPair records.
    Never raises on model output; problems become diagnostics.
FA: متنی مانند "[('aspirin', '81 mg')]" را به زوج‌های استخراج‌شده تبدیل می‌کند.
    روی خروجی مدل هرگز خطا پرتاب نمی‌کند؛ مشکلات به صورت پیام تشخیصی ثبت می‌شوند.
"""

from __future__ import annotations

import re
from typing import Iterable, List, Literal, NamedTuple, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, field_validator

from src.data.schemas import DRUG_FIRST, Mode, RelationType
from src.utils.text import normalize_surface

Severity = Literal["error", "warning", "info"]

# EN: Typographic quotes are mapped to ASCII before scanning unless backslash-escaped
# FA: نقل‌قول‌های تایپوگرافیک پیش از پویش به ASCII تبدیل می‌شوند مگر با بک‌اسلش گریز داده شده باشند
_QUOTE_MAP = str.maketrans({"‘": "'", "’": "'", "‚": "'", "‛": "'", "′": "'",
                            "“": '"', "”": '"', "„": '"', "‟": '"', "″": '"'})
_TYPOGRAPHIC = re.compile(r"\\[\s\S]|[‘’‚‛′“”„‟″]")
_NEEDS_ESCAPE = re.compile(r"[\\\n‘’‚‛′“”„‟″]")
# EN: An element holds its own quote character only backslash-escaped, so a broken tuple cannot swallow its neighbour
# FA: هر عنصر نقل‌قول خودش را فقط با بک‌اسلش در بر دارد، پس زوج خراب زوج کناری را نمی‌بلعد
_ELEMENT = r"""(?:'((?:[^'\\\n]|\\[\s\S])*)'|"((?:[^"\\\n]|\\[\s\S])*)")"""
_ESCAPE = re.compile(r"\\([\s\S])")
_TUPLE = re.compile(rf"\(\s*{_ELEMENT}\s*,\s*{_ELEMENT}\s*,?\s*\)")
_TUPLE_START = re.compile(r"""\(\s*['"]""")
_EMPTY_LIST = re.compile(r"\[\s*\]")


def _to_ascii_quote(match: re.Match) -> str:
    token = match.group(0)
    return token if token.startswith("\\") else token.translate(_QUOTE_MAP)


class Diagnostic(NamedTuple):
    severity: Severity
    message: str


class ExtractedPair(BaseModel):
    """
    EN: One (head, tail) tuple from model output; head is the drug when DRUG_FIRST holds.
    FA: یک زوج (سر، دم) از خروجی مدل؛ وقتی DRUG_FIRST برقرار است سر همان دارو است.
    """

    model_config = ConfigDict(frozen=True)

    head: str
    tail: str
    doc_id: str
    rtype: RelationType
    source_mode: Mode

    @field_validator("head", "tail")
    @classmethod
    def _non_empty(cls, value: str) -> str:
        value = value.strip()
        if not value:
            raise ValueError("pair elements must be non-empty")
        return value

    def as_pair(self) -> Tuple[str, str]:
        """(drug, other) in the shared orientation."""
        return (self.head, self.tail) if DRUG_FIRST else (self.tail, self.head)


class ParseOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    pairs: Tuple[ExtractedPair, ...] = ()
    diagnostics: Tuple[Diagnostic, ...] = ()

    @property
    def clean(self) -> bool:
        return not any(d.severity == "error" for d in self.diagnostics)


def _quote(value: str) -> str:
    # EN: Backslashes, newlines and typographic quotes are escaped. The delimiter is a quote the value
    #     lacks; a value holding both gets escaped single quotes
    # FA: بک‌اسلش، شکست خط و نقل‌قول تایپوگرافیک گریز داده می‌شوند. جداکننده نقل‌قولی است که مقدار ندارد؛
    #     اگر هر دو را داشته باشد نقل‌قول تکی گریز داده می‌شود
    value = _NEEDS_ESCAPE.sub(r"\\\g<0>", value)
    if "'" not in value:
        return f"'{value}'"
    if '"' not in value:
        return f'"{value}"'
    return "'" + value.replace("'", "\\'") + "'"


def _element(match: re.Match, group: int) -> str:
    raw = match.group(group)
    if raw is None:
        raw = match.group(group + 1)
    return _ESCAPE.sub(r"\1", raw).strip()


def format_pairs(pairs: Iterable[Union[ExtractedPair, Tuple[str, str]]]) -> str:
    """
    Canonical tuple-list text.

    EN: parse_pairs(format_pairs(p)) recovers p for any element strings, quotes and backslashes included.
    FA: برای هر رشته‌ای، از جمله نقل‌قول و بک‌اسلش، parse_pairs خروجی این تابع را دقیقاً بازمی‌سازد.
    """
    parts = []
    for pair in pairs:
        head, tail = (pair.head, pair.tail) if isinstance(pair, ExtractedPair) else pair
        parts.append(f"({_quote(head)}, {_quote(tail)})")
    return "[" + ", ".join(parts) + "]"


def parse_pairs(
    raw: str,
    doc_id: str,
    rtype: RelationType,
    mode: Mode,
    dedupe: bool = True,
) -> ParseOutcome:
    """
    Parse a completion into pairs.

    EN: A scanning tokenizer pulls every well-formed 2-tuple, so broken list syntax and surrounding
        prose are tolerated. Duplicates (after normalization) collapse unless dedupe=False.
    FA: یک پویشگر هر زوج خوش‌ساخت را بیرون می‌کشد، پس نحو ناقص فهرست و متن اطراف تحمل می‌شود.
        زوج‌های تکراری (پس از نرمال‌سازی) حذف می‌شوند مگر dedupe=False باشد.
    """
    diagnostics: List[Diagnostic] = []
    text = _TYPOGRAPHIC.sub(_to_ascii_quote, raw or "")
    if not text.strip():
        return ParseOutcome(diagnostics=(Diagnostic("error", "empty completion"),))

    matches = list(_TUPLE.finditer(text))
    if not matches:
        if _EMPTY_LIST.search(text):
            return ParseOutcome(diagnostics=(Diagnostic("info", "model returned an empty list"),))
        return ParseOutcome(diagnostics=(Diagnostic("error", "no tuple syntax found"),))

    pairs: List[ExtractedPair] = []
    seen = set()
    dropped_empty = duplicates = 0
    for m in matches:
        head = _element(m, 1)
        tail = _element(m, 3)
        if not head or not tail:
            dropped_empty += 1
            continue
        key = (normalize_surface(head), normalize_surface(tail))
        if dedupe and key in seen:
            duplicates += 1
            continue
        seen.add(key)
        pairs.append(ExtractedPair(head=head, tail=tail, doc_id=doc_id, rtype=rtype, source_mode=mode))

    first, last = matches[0], matches[-1]
    if "[" not in text[: first.start()] or "]" not in text[last.end():]:
        diagnostics.append(Diagnostic("warning", "list brackets missing or unbalanced"))
    malformed = len(_TUPLE_START.findall(text)) - len(matches)
    if malformed > 0:
        diagnostics.append(Diagnostic("warning", f"{malformed} malformed tuple(s) skipped"))
    if dropped_empty:
        diagnostics.append(Diagnostic("warning", f"{dropped_empty} tuple(s) with an empty element skipped"))
    if duplicates:
        diagnostics.append(Diagnostic("info", f"{duplicates} duplicate pair(s) removed"))
    before = text[: first.start()].rsplit("[", 1)[0].strip()
    after = text[last.end():].split("]", 1)[-1].strip()
    if before or after:
        diagnostics.append(Diagnostic("info", "text outside the pair list ignored"))
    if not pairs:
        diagnostics.append(Diagnostic("error", "no usable pairs"))
    return ParseOutcome(pairs=tuple(pairs), diagnostics=tuple(diagnostics))


def pairs_to_records(pairs: Sequence[ExtractedPair]) -> List[List[str]]:
    """EN/FA: شکل فشرده زوج‌ها برای ذخیره در فایل اجرا."""
    return [[p.head, p.tail] for p in pairs]


__all__ = [
    "Severity",
    "Diagnostic",
    "ExtractedPair",
    "ParseOutcome",
    "format_pairs",
    "parse_pairs",
    "pairs_to_records",
]
