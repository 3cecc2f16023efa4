"""
Service configuration for the FastAPI inspection API.

EN: Centralizes settings with env/YAML overrides.
FA: تنظیمات سرویس را با امکان override توسط محیط و YAML متمرکز می‌کند.
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Optional

from pydantic_settings import BaseSettings, SettingsConfigDict

from src.config import CONFIG_DIR, PROJECT_ROOT, TEMPLATE_DIR
from src.models.concept_mapper import DEFAULT_MIN_TERM_LENGTH
from src.utils.io import load_yaml_safe


class ServiceSettings(BaseSettings):
    """
    EN: API settings with sensible defaults; the lexicon is optional.
    FA: تنظیمات API با مقادیر پیش‌فرض منطقی؛ واژه‌نامه اختیاری است.
    """

    model_config = SettingsConfigDict(
        # EN: Allow overriding via env vars with UMLS_EXTRACT_API_ prefix
        # FA: امکان override با متغیرهای محیطی دارای پیشوند UMLS_EXTRACT_API_
        env_prefix="UMLS_EXTRACT_API_",
        extra="ignore",
    )

    api_host: str = "0.0.0.0"
    api_port: int = 8000
    lexicon_path: Optional[Path] = None  # EN/FA: کش واژه‌نامه؛ بدون آن /concepts/map در دسترس نیست
    template_dir: Path = TEMPLATE_DIR
    log_dir: Path = PROJECT_ROOT / "logs"
    min_term_length: int = DEFAULT_MIN_TERM_LENGTH
    allowed_origins: List[str] = ["*"]


def _resolve(path: Optional[Path]) -> Optional[Path]:
    if path is None or path.is_absolute():
        return path
    return PROJECT_ROOT / path


def load_service_settings(config_path: Optional[Path] = None) -> ServiceSettings:
    """
    Load settings from YAML (if present) plus environment overrides.

    EN: Reads configs/service.yaml when available; env vars win. Relative paths resolve against the project root.
    FA: در صورت وجود configs/service.yaml آن را می‌خواند؛ متغیرهای محیطی مقدم‌اند. مسیرهای نسبی از ریشه پروژه حساب می‌شوند.
    """
    path = config_path or (CONFIG_DIR / "service.yaml")
    yaml_data = load_yaml_safe(path)
    overridden = ServiceSettings().model_fields_set
    settings = ServiceSettings(**{k: v for k, v in yaml_data.items() if k not in overridden})
    return settings.model_copy(
        update={
            "lexicon_path": _resolve(settings.lexicon_path),
            "template_dir": _resolve(settings.template_dir),
            "log_dir": _resolve(settings.log_dir),
        }
    )


__all__ = ["ServiceSettings", "load_service_settings"]
