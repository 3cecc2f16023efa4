"""
Utility runner to start the inspection API.

EN: Spawns uvicorn with the create_app factory, using host/port from configs/service.yaml (env overrides win).
FA: uvicorn را با کارخانه create_app اجرا می‌کند؛ میزبان و پورت از configs/service.yaml خوانده می‌شود (متغیرهای محیطی مقدم‌اند).
"""

from __future__ import annotations

import subprocess
import sys
from pathlib import Path
from typing import List

from service.config import load_service_settings

ROOT = Path(__file__).resolve().parent


def backend_command(host: str, port: int) -> List[str]:
    return [
        sys.executable, "-m", "uvicorn", "service.main:create_app", "--factory",
        "--host", host, "--port", str(port),
    ]


def main() -> None:
    settings = load_service_settings()
    print(f"Starting API on {settings.api_host}:{settings.api_port} ...")
    proc = subprocess.Popen(backend_command(settings.api_host, settings.api_port), cwd=ROOT)
    try:
        # EN: Wait for the child; Ctrl+C will trigger cleanup
        # FA: منتظر پردازش فرزند می‌مانیم؛ با Ctrl+C پاک‌سازی انجام می‌شود
        proc.wait()
    except KeyboardInterrupt:
        print("Stopping API...")
    finally:
        if proc.poll() is None:
            proc.terminate()


if __name__ == "__main__":
    main()
