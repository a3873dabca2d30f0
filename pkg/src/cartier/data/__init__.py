"""Bundled fixtures: a synthetic scene, queries, recorded LLM responses."""

from __future__ import annotations

from pathlib import Path

DATA_DIR = Path(__file__).resolve().parent
BUNDLED_DIR = DATA_DIR / "bundled"


def bundled_path(name: str = "") -> Path:
    return BUNDLED_DIR / name if name else BUNDLED_DIR
