from .blur import gaussian_blur, gaussian_kernel1d, motion_blur, motion_kernel
from .jpeg import jpeg_roundtrip
from .noise import add_noise
from .pipeline import (SETTINGS, DegradationSpec, apply_spec, degrade,
                       derive_seed, make_rng, splitmix64, synthesize)
from .resize import bicubic_resize

__all__ = [
    "gaussian_blur", "gaussian_kernel1d", "motion_blur", "motion_kernel",
    "add_noise", "jpeg_roundtrip", "bicubic_resize",
    "SETTINGS", "DegradationSpec", "apply_spec", "degrade",
    "derive_seed", "make_rng", "splitmix64", "synthesize",
]
