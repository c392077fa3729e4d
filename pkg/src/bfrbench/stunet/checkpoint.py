"""Versioned binary checkpoints.

Layout: magic "STUN", u32 version, u32 config-JSON byte length, the config
JSON (UTF-8), then every parameter in param_specs order as little-endian
float64, no padding. A sidecar <path>.json mirrors the config for tooling.
"""

from __future__ import annotations

import json
import os
import struct
from collections import OrderedDict

import numpy as np

from ..autodiff import Tensor
from ..errors import FormatError
from .config import StunetConfig
from .model import StunetWeights, param_specs

MAGIC = b"STUN"
VERSION = 1


def save_checkpoint(weights: StunetWeights, path) -> None:
    path = os.fspath(path)
    config_blob = json.dumps(weights.config.to_json(), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(config_blob)))
        fh.write(config_blob)
        for name, shape in param_specs(weights.config):
            t = weights[name]
            if t.shape != tuple(shape):
                raise FormatError(
                    f"parameter {name} has shape {t.shape}, expected {tuple(shape)}")
            fh.write(t.data.astype("<f8").tobytes())
    with open(path + ".json", "w", encoding="utf-8") as fh:
        fh.write(config_blob.decode())
        fh.write("\n")


def load_checkpoint(path) -> StunetWeights:
    path = os.fspath(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic {blob[:4]!r}")
    if len(blob) < 12:
        raise FormatError(f"{path}: truncated checkpoint header")
    version, config_len = struct.unpack("<II", blob[4:12])
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    try:
        config = StunetConfig.from_json(blob[12:12 + config_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError, TypeError) as exc:
        raise FormatError(f"{path}: bad config record: {exc}") from exc
    config.validate()
    offset = 12 + config_len
    params = OrderedDict()
    for name, shape in param_specs(config):
        count = int(np.prod(shape))
        nbytes = count * 8
        chunk = blob[offset:offset + nbytes]
        if len(chunk) < nbytes:
            raise FormatError(f"{path}: truncated at parameter {name}")
        params[name] = Tensor(np.frombuffer(chunk, dtype="<f8").reshape(shape),
                              requires_grad=True)
        offset += nbytes
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes")
    return StunetWeights(config, params)
