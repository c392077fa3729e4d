"""JSON-lines manifests pairing HQ/LQ images with their degradation specs."""

from __future__ import annotations

import hashlib
import json
import os

from ..errors import FormatError, ParameterError

REQUIRED_KEYS = ("id", "hq", "lq", "setting", "seed")


def write_manifest(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_manifest(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            missing = [k for k in REQUIRED_KEYS if k not in row]
            if missing:
                raise FormatError(f"{path}:{lineno}: missing keys {missing}")
            rows.append(row)
    ids = [r["id"] for r in rows]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise FormatError(f"{path}: duplicate ids {dupes[:5]}")
    return rows


def _id_fraction(image_id: str, split_seed: int) -> float:
    """Uniform-(0,1) hash of (seed, id); stable across runs and corpus growth."""
    digest = hashlib.sha256(f"{split_seed}:{image_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def split_manifest(rows: list[dict], train_fraction: float, split_seed: int) -> list[dict]:
    """Assign a train/test split per id. Pure function of (id, seed, fraction)."""
    if not 0.0 < train_fraction < 1.0:
        raise ParameterError(f"train_fraction must be in (0,1), got {train_fraction}")
    out = []
    for row in rows:
        row = dict(row)
        row["split"] = ("train" if _id_fraction(row["id"], split_seed) < train_fraction
                        else "test")
        out.append(row)
    return out


def validate_paths(rows: list[dict], base_dir=None) -> list[str]:
    """Return error strings for rows whose hq/lq paths are missing."""
    errors = []
    for row in rows:
        for key in ("hq", "lq"):
            p = row[key]
            if base_dir is not None and not os.path.isabs(p):
                p = os.path.join(base_dir, p)
            if not os.path.exists(p):
                errors.append(f"{row['id']}: missing {key} file {p}")
    return errors
