"""
Pipeline configuration.

EN: Centralizes backend endpoints, credentials and retry policy with YAML + env overrides.
FA: آدرس‌های بک‌اند، اعتبارنامه‌ها و سیاست تلاش مجدد را با امکان override توسط YAML و محیط متمرکز می‌کند.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import SecretStr
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.utils.io import load_yaml_safe

PROJECT_ROOT = Path(__file__).resolve().parents[1]
CONFIG_DIR = PROJECT_ROOT / "configs"
TEMPLATE_DIR = PROJECT_ROOT / "templates"


class PipelineSettings(BaseSettings):
    """
    EN: Settings shared by the CLI and the pipeline; secrets come from the environment.
    FA: تنظیمات مشترک CLI و پایپ‌لاین؛ اسرار از متغیرهای محیطی خوانده می‌شوند.
    """

    model_config = SettingsConfigDict(
        # EN: Allow overriding via env vars with UMLS_EXTRACT_ prefix
        # FA: امکان override با متغیرهای محیطی دارای پیشوند UMLS_EXTRACT_
        env_prefix="UMLS_EXTRACT_",
        env_file=".env",
        extra="ignore",
    )

    llm_endpoint: Optional[str] = None  # EN/FA: آدرس کامل chat/completions
    llm_api_key: Optional[SecretStr] = None
    embedding_endpoint: Optional[str] = None
    embedding_api_key: Optional[SecretStr] = None
    embedding_model: str = "text-embedding-ada-002"
    request_timeout: float = 60.0
    max_retries: int = 5
    backoff_base: float = 1.0
    backoff_max: float = 30.0
    log_dir: Path = PROJECT_ROOT / "logs"
    template_dir: Path = TEMPLATE_DIR


def load_pipeline_settings(config_path: Optional[Path] = None) -> PipelineSettings:
    """
    Load settings from YAML (if present) plus environment overrides.

    EN: Reads configs/pipeline.yaml when available; environment variables win over YAML.
    FA: در صورت وجود configs/pipeline.yaml آن را می‌خواند؛ متغیرهای محیطی بر YAML مقدم‌اند.
    """
    path = config_path or (CONFIG_DIR / "pipeline.yaml")
    yaml_data = load_yaml_safe(path)
    # EN: Init kwargs outrank env in pydantic-settings, so drop YAML keys the env already sets
    # FA: چون آرگومان‌های سازنده بر محیط مقدم‌اند، کلیدهای YAML دارای مقدار محیطی را حذف می‌کنیم
    from_env = PipelineSettings()
    overridden = from_env.model_fields_set
    kwargs = {k: v for k, v in yaml_data.items() if k not in overridden}
    return PipelineSettings(**kwargs)


def load_section(name: str, config_dir: Optional[Path] = None) -> Dict[str, Any]:
    """EN/FA: یک فایل YAML از configs/ را بر اساس نام برمی‌گرداند."""
    return load_yaml_safe((config_dir or CONFIG_DIR) / f"{name}.yaml")


__all__ = [
    "PROJECT_ROOT",
    "CONFIG_DIR",
    "TEMPLATE_DIR",
    "PipelineSettings",
    "load_pipeline_settings",
    "load_section",
]
