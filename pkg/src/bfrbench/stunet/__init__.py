from .checkpoint import load_checkpoint, save_checkpoint
from .config import StunetConfig
from .model import StunetWeights, build, forward, restore, stb_forward, stl_forward, window_attention
from .train import TrainLog, l1_loss, train, train_step

__all__ = [
    "StunetConfig", "StunetWeights", "build", "forward", "restore",
    "stb_forward", "stl_forward", "window_attention",
    "TrainLog", "l1_loss", "train", "train_step",
    "save_checkpoint", "load_checkpoint",
]
