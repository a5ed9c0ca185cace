"""CSV and metadata emission shared by the command line.

Every CSV gets a sibling ``<stem>.meta.json`` carrying the package version,
the tolerances in force and a hash of the resolved configuration (output
paths excluded). Nothing
time-dependent is written, so reruns are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

from . import __version__


def _jsonable(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):  # numpy scalars
        return _jsonable(obj.item())
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


# where results go does not change what they are
OUTPUT_KEYS = ("out", "json")


def config_hash(config: dict) -> str:
    kept = {k: v for k, v in config.items() if k not in OUTPUT_KEYS}
    return hashlib.sha256(canonical_json(kept).encode()).hexdigest()


def meta_path(csv_path: Path) -> Path:
    return csv_path.with_name(csv_path.stem + ".meta.json")


def write_csv(path, text: str, config: dict, tolerances: dict | None = None, extra: dict | None = None) -> Path:
    """Write ``text`` to ``path`` and its metadata next to it."""
    path = Path(path)
    meta = {
        "version": __version__,
        "config_hash": config_hash(config),
        "config": config,
        "tolerances": tolerances or {},
    }
    if extra:
        meta.update(extra)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    meta_path(path).write_text(json.dumps(_jsonable(meta), sort_keys=True, indent=2) + "\n")
    return path
