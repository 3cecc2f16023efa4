"""Utility helpers for file system and serialization operations."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, Union

import yaml


def ensure_dir(path: Union[str, Path]) -> None:
    """
    Create a directory (and parents) if it does not already exist.

    EN: Ensures the provided directory exists.
    FA: اطمینان حاصل می‌کند که پوشه مورد نظر وجود داشته باشد.
    """
    dir_path = Path(path)
    # EN: Create the directory tree if missing
    # FA: اگر پوشه وجود نداشت، مسیر کامل را می‌سازد
    dir_path.mkdir(parents=True, exist_ok=True)


def canonical_json(obj: Any) -> str:
    """
    Serialize an object to a stable JSON string.

    EN: Sorted keys and fixed separators so equal objects give equal text.
    FA: کلیدها مرتب و جداکننده‌ها ثابت‌اند تا اشیای برابر متن یکسان بدهند.
    """
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def content_hash(obj: Any) -> str:
    """
    EN: SHA-256 hex digest of the canonical JSON form.
    FA: چکیده SHA-256 از شکل استاندارد JSON.
    """
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def text_hash(text: str) -> str:
    """SHA-256 hex digest of a UTF-8 string."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def read_jsonl(path: Union[str, Path]) -> Iterator[Dict[str, Any]]:
    """
    Stream records from a JSON-lines file.

    EN: Blank lines are skipped; each other line must be one JSON object.
    FA: خطوط خالی نادیده گرفته می‌شوند؛ هر خط دیگر باید یک شیٔ JSON باشد.
    """
    file_path = Path(path)
    with file_path.open("r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            yield json.loads(line)


def write_jsonl(records: Iterable[Dict[str, Any]], path: Union[str, Path]) -> int:
    """
    Write records to a JSON-lines file, replacing it.

    EN: Writes to a sibling temp file first, then renames over the target.
    FA: ابتدا در فایل موقت کنار مقصد می‌نویسد و سپس آن را جایگزین می‌کند.
    """
    file_path = Path(path)
    # EN: Ensure parent directory exists before writing
    # FA: قبل از نوشتن، پوشه والد را ایجاد/بررسی می‌کنیم
    ensure_dir(file_path.parent)
    tmp_path = file_path.with_name(file_path.name + ".tmp")
    count = 0
    with tmp_path.open("w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(canonical_json(record))
            f.write("\n")
            count += 1
    tmp_path.replace(file_path)
    return count


def append_jsonl(record: Dict[str, Any], path: Union[str, Path]) -> None:
    """
    EN: Append one record and flush.
    FA: یک رکورد را اضافه کرده و بلافاصله روی دیسک می‌نویسد.
    """
    file_path = Path(path)
    ensure_dir(file_path.parent)
    with file_path.open("a", encoding="utf-8", newline="\n") as f:
        f.write(canonical_json(record))
        f.write("\n")
        f.flush()


def load_yaml_safe(path: Union[str, Path]) -> Dict:
    """
    Load YAML config if exists, else return empty dict.

    EN: Safe helper to avoid errors when config is missing.
    FA: تابع کمکی برای خواندن YAML در صورت وجود و جلوگیری از خطا در نبود فایل.
    """
    file_path = Path(path)
    if not file_path.exists():
        return {}
    with file_path.open("r", encoding="utf-8") as f:
        return yaml.safe_load(f) or {}


__all__ = [
    "ensure_dir",
    "canonical_json",
    "content_hash",
    "text_hash",
    "read_jsonl",
    "write_jsonl",
    "append_jsonl",
    "load_yaml_safe",
]
