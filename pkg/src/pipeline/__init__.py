"""
EN: End-to-end extraction runs: run configuration, artifacts and the orchestrator.
FA: اجرای سرتاسری استخراج: پیکربندی اجرا، فایل‌های خروجی و هماهنگ‌کننده.
"""
