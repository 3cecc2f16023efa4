"""
Text normalization shared by the lexicon, the matcher and the evaluator.

EN: Case folding here never changes string length, so folded offsets equal original offsets.
FA: تبدیل حروف در اینجا طول رشته را تغییر نمی‌دهد، پس آفست‌ها در متن تبدیل‌شده و اصلی یکسان‌اند.
"""

from __future__ import annotations

QUOTE_CHARS = "'\"`‘’‚‛“”„‟′″"


def _fold_char(ch: str) -> str:
    folded = ch.casefold()
    if len(folded) == 1:
        return folded
    lowered = ch.lower()
    return lowered if len(lowered) == 1 else ch


def fold_case(text: str) -> str:
    """
    EN: Per-character case fold; characters whose fold expands (e.g. 'ß') fall back to lower() or stay.
    FA: تبدیل حروف کاراکتر به کاراکتر؛ کاراکترهایی که بلندتر می‌شوند (مثل ß) دست‌نخورده می‌مانند.
    """
    if text.isascii():
        return text.lower()
    return "".join(_fold_char(ch) for ch in text)


def collapse_whitespace(text: str) -> str:
    """Trim and squeeze every whitespace run to one space."""
    return " ".join(text.split())


def normalize_term(term: str) -> str:
    """
    Normalize a lexicon term.

    EN: Case-fold, trim, collapse internal whitespace, strip trailing periods. Idempotent.
    FA: تبدیل حروف کوچک، حذف فاصله‌های ابتدا/انتها، یکی‌کردن فاصله‌ها و حذف نقطه انتهایی. خودتوان است.
    """
    text = collapse_whitespace(fold_case(term))
    while text.endswith("."):
        text = text[:-1].rstrip()
    return text


def strip_quotes(text: str) -> str:
    """Remove matching or stray quote characters surrounding a value."""
    value = text.strip()
    while value and (value[0] in QUOTE_CHARS or value[-1] in QUOTE_CHARS):
        if value[0] in QUOTE_CHARS:
            value = value[1:]
        if value and value[-1] in QUOTE_CHARS:
            value = value[:-1]
        value = value.strip()
    return value


def normalize_surface(text: str) -> str:
    """
    Normalize an entity string for pair matching.

    EN: Strip surrounding quotes, case-fold, trim and collapse whitespace.
    FA: حذف نقل‌قول‌های اطراف، تبدیل به حروف کوچک، حذف فاصله‌های اضافی.
    """
    return collapse_whitespace(strip_quotes(text).casefold())


__all__ = [
    "QUOTE_CHARS",
    "fold_case",
    "collapse_whitespace",
    "normalize_term",
    "strip_quotes",
    "normalize_surface",
]
