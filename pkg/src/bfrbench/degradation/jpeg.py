"""JPEG round-trip in the pixel domain.

Full-range BT.601 color transform, 8x8 block DCT-II, quantization with the
standard luma/chroma tables scaled by the usual quality factor, dequantize,
inverse DCT, convert back. Entropy coding is lossless and therefore omitted.
"""

from __future__ import annotations

import numpy as np
from scipy.fft import dctn, idctn

from ..errors import ParameterError

LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)

CHROMA_TABLE = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=np.float64)


def quant_table(base: np.ndarray, quality: int) -> np.ndarray:
    if not 1 <= quality <= 100:
        raise ParameterError(f"jpeg quality must be in [1,100], got {quality}")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    return np.clip(np.floor((base * scale + 50.0) / 100.0), 1.0, 255.0)


def rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 + (b - y) / 1.772
    cr = 128.0 + (r - y) / 1.402
    return np.stack([y, cb, cr], axis=-1)


def ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    y, cb, cr = ycc[..., 0], ycc[..., 1], ycc[..., 2]
    r = y + 1.402 * (cr - 128.0)
    b = y + 1.772 * (cb - 128.0)
    g = (y - 0.299 * r - 0.114 * b) / 0.587
    return np.stack([r, g, b], axis=-1)


def _pad_to_multiple(plane: np.ndarray, m: int) -> np.ndarray:
    h, w = plane.shape
    ph, pw = (-h) % m, (-w) % m
    if ph or pw:
        plane = np.pad(plane, ((0, ph), (0, pw)), mode="edge")
    return plane


def _code_plane(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    """DCT -> quantize -> dequantize -> IDCT on one [0,255] plane."""
    h, w = plane.shape
    padded = _pad_to_multiple(plane - 128.0, 8)
    ph, pw = padded.shape
    blocks = padded.reshape(ph // 8, 8, pw // 8, 8).transpose(0, 2, 1, 3)
    coef = dctn(blocks, type=2, norm="ortho", axes=(-2, -1))
    quantized = np.sign(coef) * np.floor(np.abs(coef) / table + 0.5)
    recon = idctn(quantized * table, type=2, norm="ortho", axes=(-2, -1))
    out = recon.transpose(0, 2, 1, 3).reshape(ph, pw)
    return out[:h, :w] + 128.0


def _downsample_420(plane: np.ndarray) -> np.ndarray:
    padded = _pad_to_multiple(plane, 2)
    h, w = padded.shape
    return padded.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def _upsample_420(plane: np.ndarray, h: int, w: int) -> np.ndarray:
    up = np.repeat(np.repeat(plane, 2, axis=0), 2, axis=1)
    return up[:h, :w]


def jpeg_roundtrip(img: np.ndarray, quality: int, subsampling: str = "444") -> np.ndarray:
    subsampling = str(subsampling)
    if subsampling not in ("444", "420"):
        raise ParameterError(f"subsampling must be 444 or 420, got {subsampling!r}")
    luma_t = quant_table(LUMA_TABLE, quality)
    chroma_t = quant_table(CHROMA_TABLE, quality)
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    ycc = rgb_to_ycbcr(img * 255.0)
    out = np.empty_like(ycc)
    out[..., 0] = _code_plane(ycc[..., 0], luma_t)
    for c in (1, 2):
        if subsampling == "420":
            small = _code_plane(_downsample_420(ycc[..., c]), chroma_t)
            out[..., c] = _upsample_420(small, h, w)
        else:
            out[..., c] = _code_plane(ycc[..., c], chroma_t)
    return np.clip(ycbcr_to_rgb(out) / 255.0, 0.0, 1.0)
