"""Bicubic (cubic convolution, a = -0.5) resampling with half-pixel centers."""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError

_A = -0.5


def _cubic(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    near = (_A + 2.0) * ax3 - (_A + 3.0) * ax2 + 1.0
    far = _A * ax3 - 5.0 * _A * ax2 + 8.0 * _A * ax - 4.0 * _A
    return np.where(ax <= 1.0, near, np.where(ax < 2.0, far, 0.0))


def resample_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Dense (n_out, n_in) row-stochastic resampling operator, edge-clamped."""
    m = np.zeros((n_out, n_in), dtype=np.float64)
    out_idx = np.arange(n_out, dtype=np.float64)
    src = (out_idx + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src).astype(np.int64)
    for k in range(-1, 3):
        tap = base + k
        weight = _cubic(src - tap)
        np.add.at(m, (np.arange(n_out), np.clip(tap, 0, n_in - 1)), weight)
    return m


def bicubic_resize(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    if out_w < 4 or out_h < 4:
        raise ParameterError(f"bicubic output dims must be >= 4, got {out_w}x{out_h}")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if out_h == h and out_w == w:
        return img.copy()
    my = resample_matrix(h, out_h)
    mx = resample_matrix(w, out_w)
    out = np.einsum("ij,jwc->iwc", my, img)
    out = np.einsum("wk,hkc->hwc", mx, out)
    return np.clip(out, 0.0, 1.0)
