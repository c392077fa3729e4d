"""Full-reference metrics on 8-bit-quantized RGB (no luma conversion)."""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from ..errors import DimensionError, ParameterError
from ..harness.imageio import to_u8
from .base import MetricValue

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
C1 = (0.01 * 255.0) ** 2
C2 = (0.03 * 255.0) ** 2
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> MetricValue:
    """10*log10(255^2 / MSE) on quantized bytes; identical images give +inf."""
    _check_dims(np.asarray(a), np.asarray(b))
    qa = to_u8(a).astype(np.float64)
    qb = to_u8(b).astype(np.float64)
    mse = float(np.mean((qa - qb) ** 2))
    value = math.inf if mse == 0.0 else 10.0 * math.log10(255.0**2 / mse)
    return MetricValue("psnr", value, higher_is_better=True)


def _ssim_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / SSIM_SIGMA) ** 2)
    return k / k.sum()


def _filter_valid(plane: np.ndarray, k: np.ndarray) -> np.ndarray:
    half = len(k) // 2
    out = ndimage.correlate1d(plane, k, axis=0, mode="constant")
    out = ndimage.correlate1d(out, k, axis=1, mode="constant")
    return out[half:-half, half:-half]


def _ssim_maps(x: np.ndarray, y: np.ndarray):
    """Per-position luminance and contrast-structure maps for one channel."""
    k = _ssim_window()
    mu_x = _filter_valid(x, k)
    mu_y = _filter_valid(y, k)
    sxx = _filter_valid(x * x, k) - mu_x * mu_x
    syy = _filter_valid(y * y, k) - mu_y * mu_y
    sxy = _filter_valid(x * y, k) - mu_x * mu_y
    lum = (2 * mu_x * mu_y + C1) / (mu_x**2 + mu_y**2 + C1)
    cs = (2 * sxy + C2) / (sxx + syy + C2)
    return lum, cs


def ssim(a: np.ndarray, b: np.ndarray) -> MetricValue:
    """Mean local SSIM (11x11 Gaussian window, sigma 1.5), averaged over RGB."""
    a, b = np.asarray(a), np.asarray(b)
    _check_dims(a, b)
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise ParameterError(
            f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got "
            f"{a.shape[1]}x{a.shape[0]}")
    qa = to_u8(a).astype(np.float64)
    qb = to_u8(b).astype(np.float64)
    per_channel = []
    for c in range(a.shape[2]):
        lum, cs = _ssim_maps(qa[:, :, c], qb[:, :, c])
        per_channel.append(float(np.mean(lum * cs)))
    return MetricValue("ssim", float(np.mean(per_channel)), higher_is_better=True)


def _downsample2(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    plane = plane[:h - h % 2, :w - w % 2]
    return plane.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def ms_ssim(a: np.ndarray, b: np.ndarray, scales: int = 5) -> MetricValue:
    """Multi-scale SSIM: contrast-structure at every scale, luminance at the
    coarsest, combined with the standard exponents (renormalized when fewer
    than 5 scales are requested)."""
    a, b = np.asarray(a), np.asarray(b)
    _check_dims(a, b)
    if not 1 <= scales <= len(MSSSIM_WEIGHTS):
        raise ParameterError(f"scales must be in [1,{len(MSSSIM_WEIGHTS)}], got {scales}")
    need = SSIM_WINDOW * 2 ** (scales - 1)
    if min(a.shape[0], a.shape[1]) < need:
        raise ParameterError(
            f"ms_ssim with {scales} scales needs images of at least {need}px per "
            f"side, got {a.shape[1]}x{a.shape[0]}; pass a smaller scale override")
    weights = np.array(MSSSIM_WEIGHTS[:scales])
    weights = weights / weights.sum()
    qa = to_u8(a).astype(np.float64)
    qb = to_u8(b).astype(np.float64)
    channels = a.shape[2]
    per_channel = []
    for c in range(channels):
        x, y = qa[:, :, c], qb[:, :, c]
        value = 1.0
        for level in range(scales):
            lum, cs = _ssim_maps(x, y)
            if level < scales - 1:
                value *= max(float(np.mean(cs)), 0.0) ** weights[level]
                x, y = _downsample2(x), _downsample2(y)
            else:
                value *= max(float(np.mean(lum * cs)), 0.0) ** weights[level]
        per_channel.append(value)
    return MetricValue("ms_ssim", float(np.mean(per_channel)), higher_is_better=True)
