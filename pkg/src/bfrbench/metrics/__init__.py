from .base import MetricValue
from .evaluate import evaluate
from .fullref import ms_ssim, psnr, ssim
from .niqe import NiqeModel, niqe, niqe_fit
from .taskdriven import afics, afld, read_embeddings, read_landmarks

__all__ = [
    "MetricValue", "psnr", "ssim", "ms_ssim",
    "NiqeModel", "niqe", "niqe_fit",
    "afld", "afics", "read_landmarks", "read_embeddings",
    "evaluate",
]
