from .imageio import load_image, save_image, to_u8
from .manifest import read_manifest, split_manifest, write_manifest
from .report import EvalReport, write_report

__all__ = [
    "load_image", "save_image", "to_u8",
    "read_manifest", "write_manifest", "split_manifest",
    "EvalReport", "write_report",
]
