"""Small helpers for reproducible output files: config hashing, CSV and JSON writers."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def config_hash(config: dict) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(path, header: list[str], rows, config_hash_: str) -> Path:
    """CSV with a leading ``#`` provenance line, a header row, then 17-digit numbers."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# config_hash={config_hash_} version={__version__}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return header, data


def write_json(path, payload: dict, config_hash_: str) -> Path:
    path = Path(path)
    doc = {"config_hash": config_hash_, "version": __version__, **_jsonable(payload)}
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
    return path
