"""Architecture hyperparameters.

The network is a fixed 4-level encoder/decoder; channels double and spatial
extents halve per level (C, 2C, 4C, 8C at H, H/2, H/4, H/8). Defaults:
4/6/6/8 layers per level, window 8, head count = level_channels/32 (min 1),
MLP hidden ratio 4.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

from ..errors import ConfigError

LEVELS = 4


@dataclass(frozen=True)
class StunetConfig:
    base_channels: int = 16
    stl_counts: tuple = (4, 6, 6, 8)
    window_size: int = 8
    heads_per_level: tuple | None = None
    mlp_ratio: float = 4.0
    image_channels: int = 3
    input_size: tuple = (128, 128)

    def __post_init__(self):
        object.__setattr__(self, "stl_counts", tuple(int(n) for n in self.stl_counts))
        object.__setattr__(self, "input_size", tuple(int(n) for n in self.input_size))
        if self.heads_per_level is None:
            heads = tuple(max(1, self.level_channels(l) // 32)
                          for l in range(1, LEVELS + 1))
            object.__setattr__(self, "heads_per_level", heads)
        else:
            object.__setattr__(self, "heads_per_level",
                               tuple(int(n) for n in self.heads_per_level))

    def level_channels(self, level: int) -> int:
        return self.base_channels * 2 ** (level - 1)

    def level_extent(self, level: int) -> tuple:
        h, w = self.input_size
        return h // 2 ** (level - 1), w // 2 ** (level - 1)

    def mlp_hidden(self, level: int) -> int:
        return int(round(self.level_channels(level) * self.mlp_ratio))

    def validate(self) -> None:
        problems = []
        c = self.base_channels
        if c < 2 or c % 2:
            problems.append(f"base_channels must be even and >= 2, got {c}")
        if c < self.image_channels:
            problems.append(
                f"base_channels {c} must be >= image_channels {self.image_channels}")
        if self.image_channels < 1:
            problems.append(f"image_channels must be >= 1, got {self.image_channels}")
        if len(self.stl_counts) != LEVELS or any(n < 1 for n in self.stl_counts):
            problems.append(f"stl_counts must be {LEVELS} positive ints, got {self.stl_counts}")
        if len(self.heads_per_level) != LEVELS or any(n < 1 for n in self.heads_per_level):
            problems.append(
                f"heads_per_level must be {LEVELS} positive ints, got {self.heads_per_level}")
        if self.window_size < 2:
            problems.append(f"window_size must be >= 2, got {self.window_size}")
        if self.mlp_ratio <= 0:
            problems.append(f"mlp_ratio must be positive, got {self.mlp_ratio}")
        h, w = self.input_size
        for level in range(1, LEVELS + 1):
            stride = 2 ** (level - 1)
            if h % stride or w % stride:
                problems.append(
                    f"input {w}x{h} not divisible by {stride} at level {level}")
                continue
            eh, ew = self.level_extent(level)
            if eh % self.window_size or ew % self.window_size:
                problems.append(
                    f"window {self.window_size} does not divide level-{level} "
                    f"extent {ew}x{eh}")
            if len(self.heads_per_level) == LEVELS:
                heads = self.heads_per_level[level - 1]
                if heads >= 1 and self.level_channels(level) % heads:
                    problems.append(
                        f"level-{level} channels {self.level_channels(level)} not "
                        f"divisible by {heads} heads")
        if problems:
            raise ConfigError("; ".join(problems))

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data) -> "StunetConfig":
        if isinstance(data, (str, bytes)):
            data = json.loads(data)
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})
