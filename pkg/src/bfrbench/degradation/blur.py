"""Gaussian and motion blur with edge-inclusive reflect padding.

Kernels are normalized to sum exactly 1, so constant images are invariant
and (for symmetric kernels with this padding) total image mass is preserved.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from ..errors import ParameterError


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    if sigma <= 0:
        raise ParameterError(f"gaussian blur sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    k = gaussian_kernel1d(sigma)
    out = ndimage.correlate1d(np.asarray(img, dtype=np.float64), k,
                              axis=0, mode="reflect")
    out = ndimage.correlate1d(out, k, axis=1, mode="reflect")
    return np.clip(out, 0.0, 1.0)


def motion_kernel(length: int, angle_deg: float) -> np.ndarray:
    """1-pixel-wide line of `length` samples at `angle_deg`, bilinearly rasterized."""
    if length < 3:
        raise ParameterError(f"motion blur length must be >= 3, got {length}")
    theta = math.radians(angle_deg)
    dx, dy = math.cos(theta), math.sin(theta)
    radius = math.ceil((length - 1) / 2.0) + 1
    size = 2 * radius + 1
    kernel = np.zeros((size, size), dtype=np.float64)
    for t in range(length):
        offset = t - (length - 1) / 2.0
        y = radius + offset * dy
        x = radius + offset * dx
        y0, x0 = int(math.floor(y)), int(math.floor(x))
        fy, fx = y - y0, x - x0
        kernel[y0, x0] += (1 - fy) * (1 - fx)
        kernel[y0, x0 + 1] += (1 - fy) * fx
        kernel[y0 + 1, x0] += fy * (1 - fx)
        kernel[y0 + 1, x0 + 1] += fy * fx
    return kernel / kernel.sum()


def motion_blur(img: np.ndarray, length: int, angle_deg: float) -> np.ndarray:
    k = motion_kernel(length, angle_deg)
    img = np.asarray(img, dtype=np.float64)
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        out[:, :, c] = ndimage.correlate(img[:, :, c], k, mode="reflect")
    return np.clip(out, 0.0, 1.0)
