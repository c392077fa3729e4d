"""Additive/shot noise models, clamped to [0,1]."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ParameterError

FAMILIES = ("gaussian", "laplace", "poisson")


def add_noise(img: np.ndarray, family: str, strength: float,
              rng: np.random.Generator) -> np.ndarray:
    """gaussian/laplace: `strength` is the noise standard deviation on the
    [0,1] scale. poisson: `strength` is the photon peak (img*peak is sampled
    and rescaled). strength 0 is the identity for every family.
    """
    if family not in FAMILIES:
        raise ParameterError(f"unknown noise family {family!r}; expected one of {FAMILIES}")
    if strength < 0:
        raise ParameterError(f"noise strength must be >= 0, got {strength}")
    img = np.asarray(img, dtype=np.float64)
    if strength == 0:
        return img.copy()
    if family == "gaussian":
        out = img + rng.normal(0.0, strength, size=img.shape)
    elif family == "laplace":
        # laplace scale b = sigma / sqrt(2) so strength is again the std
        out = img + rng.laplace(0.0, strength / math.sqrt(2.0), size=img.shape)
    else:
        out = rng.poisson(img * strength).astype(np.float64) / strength
    return np.clip(out, 0.0, 1.0)
