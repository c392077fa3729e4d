"""Natural-image quality score against a pristine-corpus Gaussian model.

Per image and per RGB channel (each channel is an independent plane, pooled):
MSCN coefficients (I - mu)/(sigma + 1) from 7x7 Gaussian local statistics,
a generalized-Gaussian fit to the coefficients plus asymmetric fits to the
four orientation products (18 features), at the original scale and a 2x
low-passed downsample (36 total per patch). Fitting keeps patches whose mean
local sigma exceeds a per-image sharpness quantile; scoring uses all patches.
The score is the Gaussian-model distance

    sqrt((nu1-nu2)^T ((Sigma1+Sigma2)/2)^(-1) (nu1-nu2))

with eigenvalues clamped at 1e-10 before inversion.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.special import gamma as gamma_fn

from ..errors import FitError, FormatError, NumericError, ParameterError
from ..harness.imageio import load_image
from .base import MetricValue

FEATURE_DIM = 36
_EPS = 1e-12

_GAMMA_GRID = np.arange(0.2, 10.0 + 1e-9, 0.001)
# moment-ratio tables for the grid, precomputed once
_GGD_RATIO = (gamma_fn(1.0 / _GAMMA_GRID) * gamma_fn(3.0 / _GAMMA_GRID)
              / gamma_fn(2.0 / _GAMMA_GRID) ** 2)
_AGGD_RATIO = (gamma_fn(2.0 / _GAMMA_GRID) ** 2
               / (gamma_fn(1.0 / _GAMMA_GRID) * gamma_fn(3.0 / _GAMMA_GRID)))


@dataclass
class NiqeModel:
    mean: np.ndarray
    cov: np.ndarray
    patch: int
    scales: int = 2
    quantile: float = 0.75
    corpus_hash: str = ""

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist(),
                "patch": self.patch, "scales": self.scales,
                "quantile": self.quantile, "corpus_hash": self.corpus_hash}

    @classmethod
    def from_json(cls, d: dict) -> "NiqeModel":
        model = cls(mean=np.asarray(d["mean"], dtype=np.float64),
                    cov=np.asarray(d["cov"], dtype=np.float64),
                    patch=int(d["patch"]), scales=int(d.get("scales", 2)),
                    quantile=float(d.get("quantile", 0.75)),
                    corpus_hash=str(d.get("corpus_hash", "")))
        if model.mean.shape != (FEATURE_DIM,) or model.cov.shape != (FEATURE_DIM, FEATURE_DIM):
            raise FormatError(
                f"niqe model must be {FEATURE_DIM}-dim, got mean {model.mean.shape} "
                f"cov {model.cov.shape}")
        return model

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "NiqeModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _gauss1d(size: int = 7, sigma: float = 7.0 / 6.0) -> np.ndarray:
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _local_stats(plane: np.ndarray):
    k = _gauss1d()
    mu = ndimage.correlate1d(plane, k, axis=0, mode="reflect")
    mu = ndimage.correlate1d(mu, k, axis=1, mode="reflect")
    sq = ndimage.correlate1d(plane * plane, k, axis=0, mode="reflect")
    sq = ndimage.correlate1d(sq, k, axis=1, mode="reflect")
    sigma = np.sqrt(np.maximum(sq - mu * mu, 0.0))
    return mu, sigma


def mscn(plane: np.ndarray):
    """Mean-subtracted contrast-normalized field and the local sigma field."""
    mu, sigma = _local_stats(plane)
    return (plane - mu) / (sigma + 1.0), sigma


def _fit_ggd(x: np.ndarray):
    mean_abs = max(float(np.mean(np.abs(x))), _EPS)
    sigma_sq = float(np.mean(x * x))
    rho = sigma_sq / (mean_abs * mean_abs)
    alpha = _GAMMA_GRID[int(np.argmin(np.abs(_GGD_RATIO - rho)))]
    return alpha, sigma_sq


def _fit_aggd(x: np.ndarray):
    neg = x[x < 0]
    pos = x[x > 0]
    left = np.sqrt(np.mean(neg * neg)) if neg.size else 0.0
    right = np.sqrt(np.mean(pos * pos)) if pos.size else 0.0
    gammahat = left / max(right, _EPS)
    mean_abs = float(np.mean(np.abs(x)))
    mean_sq = max(float(np.mean(x * x)), _EPS)
    rhat = mean_abs * mean_abs / mean_sq
    rhatnorm = (rhat * (gammahat**3 + 1.0) * (gammahat + 1.0)
                / (gammahat**2 + 1.0) ** 2)
    alpha = _GAMMA_GRID[int(np.argmin((_AGGD_RATIO - rhatnorm) ** 2))]
    ratio = np.sqrt(gamma_fn(1.0 / alpha) / gamma_fn(3.0 / alpha))
    beta_l = left * ratio
    beta_r = right * ratio
    eta = (beta_r - beta_l) * (gamma_fn(2.0 / alpha) / gamma_fn(1.0 / alpha))
    return alpha, eta, left * left, right * right


_ORIENTATIONS = ((0, 1), (1, 0), (1, 1), (1, -1))  # H, V, D1, D2 shifts


def _block_view(field: np.ndarray, patch: int) -> np.ndarray:
    h, w = field.shape
    field = field[:h - h % patch, :w - w % patch]
    nby, nbx = field.shape[0] // patch, field.shape[1] // patch
    return field.reshape(nby, patch, nbx, patch).swapaxes(1, 2).reshape(-1, patch, patch)


def _scale_features(m: np.ndarray, patch: int) -> np.ndarray:
    """18 features per patch of one MSCN field."""
    products = [m * np.roll(np.roll(m, dy, axis=0), dx, axis=1)
                for dy, dx in _ORIENTATIONS]
    blocks = _block_view(m, patch)
    prod_blocks = [_block_view(p, patch) for p in products]
    feats = np.empty((blocks.shape[0], 18), dtype=np.float64)
    for i in range(blocks.shape[0]):
        row = list(_fit_ggd(blocks[i].ravel()))
        for pb in prod_blocks:
            row.extend(_fit_aggd(pb[i].ravel()))
        feats[i] = row
    return feats


def _downsample2(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    plane = plane[:h - h % 2, :w - w % 2]
    return plane.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def image_features(img: np.ndarray, patch: int):
    """(n_patches, 36) features and (n_patches,) sharpness, channels pooled."""
    if patch % 2:
        raise ParameterError(f"patch size must be even, got {patch}")
    img = np.asarray(img, dtype=np.float64)
    feats, sharps = [], []
    for c in range(img.shape[2]):
        plane = img[:, :, c] * 255.0
        h, w = plane.shape
        plane = plane[:h - h % patch, :w - w % patch]
        m1, sigma = mscn(plane)
        f1 = _scale_features(m1, patch)
        m2, _ = mscn(_downsample2(plane))
        f2 = _scale_features(m2, patch // 2)
        sharp = _block_view(sigma, patch).mean(axis=(1, 2))
        feats.append(np.concatenate([f1, f2], axis=1))
        sharps.append(sharp)
    if not feats or feats[0].shape[0] == 0:
        raise ParameterError(
            f"image too small for patch size {patch}: {img.shape[1]}x{img.shape[0]}")
    return np.concatenate(feats, axis=0), np.concatenate(sharps, axis=0)


def _corpus_hash(paths: list[str]) -> str:
    digest = hashlib.sha256()
    for p in paths:
        digest.update(os.path.basename(p).encode())
        with open(p, "rb") as fh:
            digest.update(hashlib.sha256(fh.read()).digest())
    return digest.hexdigest()


def niqe_fit(pristine_dir, patch: int = 32, sharpness_quantile: float = 0.75) -> NiqeModel:
    """Fit the pristine Gaussian model over sharp patches of a clean corpus."""
    pristine_dir = os.fspath(pristine_dir)
    names = sorted(f for f in os.listdir(pristine_dir)
                   if f.lower().endswith((".ppm", ".pgm", ".png")))
    if len(names) < 10:
        raise FitError(f"need at least 10 pristine images, found {len(names)}")
    if not 0.0 <= sharpness_quantile < 1.0:
        raise ParameterError(f"sharpness quantile must be in [0,1), got {sharpness_quantile}")
    paths = [os.path.join(pristine_dir, n) for n in names]
    kept, total = [], 0
    for p in paths:
        feats, sharp = image_features(load_image(p), patch)
        total += feats.shape[0]
        threshold = np.quantile(sharp, sharpness_quantile)
        kept.append(feats[sharp >= threshold])
    samples = np.concatenate(kept, axis=0)
    if samples.shape[0] < 2 * FEATURE_DIM:
        raise FitError(
            f"too few sharp patches: kept {samples.shape[0]} of {total}, "
            f"need at least {2 * FEATURE_DIM}")
    mean = samples.mean(axis=0)
    cov = np.cov(samples, rowvar=False, ddof=1)
    cov = 0.5 * (cov + cov.T)
    return NiqeModel(mean=mean, cov=cov, patch=patch,
                     quantile=sharpness_quantile, corpus_hash=_corpus_hash(paths))


def gaussian_distance(nu1: np.ndarray, cov1: np.ndarray,
                      nu2: np.ndarray, cov2: np.ndarray) -> float:
    """Distance between two feature Gaussians with pooled-covariance metric."""
    pooled = 0.5 * (cov1 + cov2)
    pooled = 0.5 * (pooled + pooled.T)
    w, v = np.linalg.eigh(pooled)
    w = np.maximum(w, 1e-10)
    delta = np.asarray(nu1, dtype=np.float64) - np.asarray(nu2, dtype=np.float64)
    proj = v.T @ delta
    d_sq = float(np.sum(proj * proj / w))
    if not np.isfinite(d_sq) or d_sq < 0:
        raise NumericError("niqe distance is not finite")
    return float(np.sqrt(d_sq))


def niqe(img: np.ndarray, model: NiqeModel) -> MetricValue:
    """Score one image against a pristine model (lower is better)."""
    feats, _ = image_features(img, model.patch)
    if feats.shape[0] < 4:
        raise ParameterError(
            f"niqe needs at least 4 patches, image yields {feats.shape[0]}")
    nu = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False, ddof=1)
    cov = 0.5 * (cov + cov.T)
    return MetricValue("niqe", gaussian_distance(model.mean, model.cov, nu, cov),
                       higher_is_better=False)
