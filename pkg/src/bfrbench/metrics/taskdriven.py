"""Task-driven metrics over externally produced landmark/embedding files.

Landmarks file: JSON-lines, {"id": ..., "points": [[x, y], ...]}.
Embeddings file: JSON-lines, {"id": ..., "vec": [...]}.
Detectors/embedders are out of scope; both sides of a pair come from files.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import DimensionError, FormatError, PairingError, ParameterError
from .base import MetricValue


def afld(points_restored, points_gt, img_w: int, img_h: int) -> MetricValue:
    """Mean Euclidean distance between corresponding landmarks, with
    coordinates normalized by image width/height to the unit square."""
    pr = np.asarray(points_restored, dtype=np.float64)
    pg = np.asarray(points_gt, dtype=np.float64)
    if pr.shape != pg.shape or pr.ndim != 2 or pr.shape[1] != 2:
        raise PairingError(
            f"landmark sets must both be (K, 2); got {pr.shape} vs {pg.shape}")
    if not (np.isfinite(pr).all() and np.isfinite(pg).all()):
        raise ParameterError("landmarks must be finite")
    scale = np.array([img_w, img_h], dtype=np.float64)
    d = np.linalg.norm(pr / scale - pg / scale, axis=1)
    return MetricValue("afld", float(d.mean()), higher_is_better=False)


def afics(e_restored, e_gt) -> MetricValue:
    """Cosine similarity between two identity embeddings."""
    a = np.asarray(e_restored, dtype=np.float64).reshape(-1)
    b = np.asarray(e_gt, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise DimensionError(f"embedding dims differ: {a.shape[0]} vs {b.shape[0]}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ParameterError("embeddings must have non-zero norm")
    return MetricValue("afics", float(a @ b / (na * nb)), higher_is_better=True)


def _read_jsonl(path, value_key: str) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if "id" not in row or value_key not in row:
                raise FormatError(f"{path}:{lineno}: needs 'id' and '{value_key}'")
            out[str(row["id"])] = np.asarray(row[value_key], dtype=np.float64)
    return out


def read_landmarks(path) -> dict[str, np.ndarray]:
    return _read_jsonl(path, "points")


def read_embeddings(path) -> dict[str, np.ndarray]:
    return _read_jsonl(path, "vec")
