"""
Structured logging helpers.

EN: Each event is one JSON object per line in a component log file, plus a terse stderr handler.
FA: هر رویداد یک شیء JSON در یک خط از فایل لاگ مؤلفه است، به همراه خروجی کوتاه در stderr.
"""

from __future__ import annotations

import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Union

from src.utils.io import ensure_dir


def setup_logger(
    name: str,
    log_dir: Optional[Union[str, Path]] = None,
    filename: str = "pipeline.jsonl",
    level: int = logging.INFO,
) -> logging.Logger:
    """
    Configure a named logger once.

    EN: Adds a JSONL file handler (when log_dir is given) and a WARNING stderr handler.
    FA: در صورت داشتن log_dir یک هندلر فایل JSONL و یک هندلر stderr سطح WARNING اضافه می‌کند.
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)
    # EN: Avoid stacking handlers when called repeatedly (tests, CLI re-entry)
    # FA: از اضافه شدن چندباره هندلرها در فراخوانی‌های تکراری جلوگیری می‌کنیم
    if not getattr(logger, "_umls_configured", False):
        stream = logging.StreamHandler()
        stream.setLevel(logging.WARNING)
        stream.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        logger.addHandler(stream)
        logger._umls_configured = True  # type: ignore[attr-defined]

    if log_dir is not None:
        target = (Path(log_dir) / filename).resolve()
        attached = {
            Path(h.baseFilename).resolve()
            for h in logger.handlers
            if isinstance(h, logging.FileHandler)
        }
        if target not in attached:
            ensure_dir(log_dir)
            fh = logging.FileHandler(target, encoding="utf-8")
            fh.setFormatter(logging.Formatter("%(message)s"))
            logger.addHandler(fh)
    return logger


def log_event(logger: logging.Logger, event: str, level: int = logging.INFO, **fields: Any) -> None:
    """
    EN: Emit one structured record; fields land as top-level JSON keys.
    FA: یک رکورد ساخت‌یافته ثبت می‌کند؛ فیلدها به کلیدهای سطح اول JSON تبدیل می‌شوند.
    """
    log_line = {
        "event": event,
        "level": logging.getLevelName(level),
        "logger": logger.name,
        **fields,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    logger.log(level, json.dumps(log_line, ensure_ascii=False, default=str))


__all__ = ["setup_logger", "log_event"]
