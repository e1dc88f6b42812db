# src/storage/load_presets.py
from __future__ import annotations

import json
import logging
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict

PROJECT_ROOT = Path(__file__).resolve().parents[2]
CONFIG_DIR = PROJECT_ROOT / "src" / "config"

log = logging.getLogger(__name__)


def load_json(path: Path | str) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config not found at {path}")
    with open(path, "r") as f:
        return json.load(f)


@lru_cache(maxsize=None)
def _load_preset_file_cached(name: str) -> str:
    # cached as text so callers always get a fresh, mutable dict
    path = CONFIG_DIR / name
    if not path.exists():
        raise FileNotFoundError(f"Preset file not found at {path}")
    log.debug(f"Loading preset file {path}")
    return path.read_text()


def load_preset_file(name: str) -> Dict[str, Any]:
    """Load one of the bundled preset files under src/config/."""
    return json.loads(_load_preset_file_cached(name))
