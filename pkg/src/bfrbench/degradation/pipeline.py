"""The five degradation settings, sampled deterministically and replayable.

Per-image 64-bit seeds are derived from (global seed, sorted-filename index)
with splitmix64, and all sampled draws come from a Philox counter-based
generator keyed by that seed, so outputs are independent of processing order
and thread count. A DegradationSpec records every sampled parameter; replay
applies the recorded parameters and re-derives only the noise stream from
the stored seed, which makes spec replay bit-exact.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import BfrBenchError, ParameterError
from ..harness.imageio import load_image, save_image
from ..harness.manifest import write_manifest
from .blur import gaussian_blur, motion_blur
from .jpeg import jpeg_roundtrip
from .noise import add_noise
from .resize import bicubic_resize

SETTINGS = ("blur", "noise", "jpeg", "lr", "full")

# default parameter ranges (all overridable via the `ranges` argument)
DEFAULT_RANGES = {
    "gaussian_sigma": (1.0, 5.0),
    "motion_length": (5, 15),
    "motion_angle": (0.0, 180.0),
    "noise_strength": (5.0 / 255.0, 25.0 / 255.0),
    "poisson_peak": (30.0, 300.0),
    "jpeg_quality": (30, 85),
    "lr_factor": (2, 8),
    "full_stage_prob": 0.75,
}

_MASK64 = (1 << 64) - 1
_NOISE_STREAM_TAG = 0xA5A5_5A5A_0F0F_F0F0


def splitmix64(x: int) -> int:
    """One step of the splitmix64 mixer (Steele et al. constants)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def derive_seed(global_seed: int, image_index: int) -> int:
    return splitmix64((global_seed & _MASK64) ^ splitmix64(image_index & _MASK64))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed & _MASK64))


@dataclass
class DegradationSpec:
    """Fully sampled parameters of one LQ image; replays bit-exactly."""

    setting: str
    seed: int
    params: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"setting": self.setting, "seed": self.seed, "params": self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationSpec":
        return cls(setting=d["setting"], seed=int(d["seed"]), params=d["params"])


def _sample_blur(rng, ranges) -> dict:
    if rng.random() < 0.5:
        lo, hi = ranges["gaussian_sigma"]
        return {"kind": "gaussian", "sigma": float(rng.uniform(lo, hi))}
    llo, lhi = ranges["motion_length"]
    alo, ahi = ranges["motion_angle"]
    return {"kind": "motion",
            "length": int(rng.integers(llo, lhi + 1)),
            "angle": float(rng.uniform(alo, ahi))}


def _sample_noise(rng, ranges) -> dict:
    family = ("gaussian", "laplace", "poisson")[int(rng.integers(0, 3))]
    if family == "poisson":
        lo, hi = ranges["poisson_peak"]
    else:
        lo, hi = ranges["noise_strength"]
    return {"family": family, "strength": float(rng.uniform(lo, hi))}


def _sample_jpeg(rng, ranges, chroma) -> dict:
    lo, hi = ranges["jpeg_quality"]
    return {"quality": int(rng.integers(lo, hi + 1)), "subsampling": chroma}


def _sample_lr(rng, ranges) -> dict:
    lo, hi = ranges["lr_factor"]
    return {"factor": int(rng.integers(lo, hi + 1))}


def sample_params(setting: str, rng: np.random.Generator,
                  ranges: dict | None = None, chroma: str = "444") -> dict:
    ranges = {**DEFAULT_RANGES, **(ranges or {})}
    if setting == "blur":
        return _sample_blur(rng, ranges)
    if setting == "noise":
        return _sample_noise(rng, ranges)
    if setting == "jpeg":
        return _sample_jpeg(rng, ranges, chroma)
    if setting == "lr":
        return _sample_lr(rng, ranges)
    if setting == "full":
        p = ranges["full_stage_prob"]
        while True:
            include = [bool(rng.random() < p) for _ in range(4)]
            if any(include):
                break
        params: dict = {"stages": []}
        # fixed composition order: blur -> resize -> noise -> jpeg
        if include[0]:
            params["stages"].append("blur")
            params["blur"] = _sample_blur(rng, ranges)
        if include[1]:
            params["stages"].append("lr")
            params["lr"] = _sample_lr(rng, ranges)
        if include[2]:
            params["stages"].append("noise")
            params["noise"] = _sample_noise(rng, ranges)
        if include[3]:
            params["stages"].append("jpeg")
            params["jpeg"] = _sample_jpeg(rng, ranges, chroma)
        return params
    raise ParameterError(f"unknown setting {setting!r}; expected one of {SETTINGS}")


def _apply_blur(img, p):
    if p["kind"] == "gaussian":
        return gaussian_blur(img, p["sigma"])
    return motion_blur(img, p["length"], p["angle"])


def _apply_lr(img, p):
    h, w = img.shape[:2]
    f = p["factor"]
    small = bicubic_resize(img, w // f, h // f)
    return bicubic_resize(small, w, h)


def apply_spec(img: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    """Deterministically reproduce the LQ image described by `spec`."""
    noise_rng = make_rng(splitmix64(spec.seed ^ _NOISE_STREAM_TAG))
    p = spec.params
    if spec.setting == "blur":
        return _apply_blur(img, p)
    if spec.setting == "noise":
        return add_noise(img, p["family"], p["strength"], noise_rng)
    if spec.setting == "jpeg":
        return jpeg_roundtrip(img, p["quality"], p["subsampling"])
    if spec.setting == "lr":
        return _apply_lr(img, p)
    if spec.setting == "full":
        out = img
        for stage in p["stages"]:
            if stage == "blur":
                out = _apply_blur(out, p["blur"])
            elif stage == "lr":
                out = _apply_lr(out, p["lr"])
            elif stage == "noise":
                out = add_noise(out, p["noise"]["family"],
                                p["noise"]["strength"], noise_rng)
            elif stage == "jpeg":
                out = jpeg_roundtrip(out, p["jpeg"]["quality"],
                                     p["jpeg"]["subsampling"])
        return out
    raise ParameterError(f"unknown setting {spec.setting!r}")


def degrade(img: np.ndarray, setting: str, seed: int,
            ranges: dict | None = None, chroma: str = "444"):
    """Sample a degradation for `setting` from `seed` and apply it.

    Returns (lq_image, spec); apply_spec(img, spec) reproduces lq bit-exactly.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if h < 16 or w < 16:
        raise ParameterError(f"image too small to degrade: {w}x{h} (minimum 16)")
    rng = make_rng(seed)
    spec = DegradationSpec(setting=setting, seed=int(seed) & _MASK64,
                           params=sample_params(setting, rng, ranges, chroma))
    return apply_spec(img, spec), spec


_IMAGE_SUFFIXES = (".ppm", ".pgm", ".png")


def synthesize(hq_dir, setting: str, global_seed: int, out_dir,
               threads: int = 1, strict: bool = False,
               ranges: dict | None = None, chroma: str = "444"):
    """Degrade every image in hq_dir, write LQ PPMs and a manifest to out_dir.

    Returns (manifest_rows, error_strings). Re-running with the same inputs
    produces byte-identical outputs regardless of `threads`.
    """
    if setting not in SETTINGS:
        raise ParameterError(f"unknown setting {setting!r}; expected one of {SETTINGS}")
    hq_dir, out_dir = os.fspath(hq_dir), os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    names = sorted(f for f in os.listdir(hq_dir)
                   if f.lower().endswith(_IMAGE_SUFFIXES))
    images, errors = {}, []
    for name in names:
        try:
            images[name] = load_image(os.path.join(hq_dir, name))
        except BfrBenchError as exc:
            errors.append(f"{name}: {exc}")
            if strict:
                raise
    sizes = {name: img.shape[:2] for name, img in images.items()}
    if len(set(sizes.values())) > 1:
        detail = ", ".join(f"{n}={s[1]}x{s[0]}" for n, s in sorted(sizes.items()))
        raise ParameterError(f"mixed image sizes in {hq_dir}: {detail}")

    def run_one(item):
        index, name = item
        img = images[name]
        seed = derive_seed(global_seed, index)
        lq, spec = degrade(img, setting, seed, ranges=ranges, chroma=chroma)
        stem = os.path.splitext(name)[0]
        lq_path = os.path.join(out_dir, stem + ".ppm")
        save_image(lq, lq_path)
        return {"id": stem, "hq": os.path.join(hq_dir, name), "lq": lq_path,
                "setting": setting, "seed": seed, "params": spec.params}

    # index comes from the sorted file list, so seeds are order-independent
    work = [(i, name) for i, name in enumerate(names) if name in images]
    if threads > 1 and len(work) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run_one, work))
    else:
        rows = [run_one(item) for item in work]
    rows.sort(key=lambda r: r["id"])
    write_manifest(rows, os.path.join(out_dir, "manifest.jsonl"))
    return rows, errors
