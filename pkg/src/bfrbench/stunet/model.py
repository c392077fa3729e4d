"""The restoration network: conv embedding, 4-level windowed-attention
encoder/decoder with additive skips, conv restoration head.

Data layout: convolutions and pixel (un)shuffles run in NCHW; attention
blocks run in NHWC. Downsampling is pixel-unshuffle (x4 channels) followed
by a learnable pointwise projection to 2x channels; upsampling is
pixel-shuffle (/4) followed by a pointwise projection to the level target,
which keeps the additive skip connections dimension-compatible.

Initialization makes a fresh network (nearly) the identity map: the
embedding conv replicates the image channels into the feature stack, every
attention output projection / MLP second layer starts at zero so each
transformer layer is a pure residual pass-through, and the restoration conv
averages the replicas back with a factor 1/2 that undoes the shallow+deep
aggregation. Training therefore learns a correction on top of the input.
"""

from __future__ import annotations

import hashlib
import math
from collections import OrderedDict
from functools import lru_cache

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor, no_grad
from ..errors import DimensionError
from .config import LEVELS, StunetConfig

STL_PARAMS = ("ln1.g", "ln1.b", "q.w", "q.b", "k.w", "k.b", "v.w", "v.b",
              "proj.w", "proj.b", "bias_table", "ln2.g", "ln2.b",
              "fc1.w", "fc1.b", "fc2.w", "fc2.b")

MASK_VALUE = -1e9  # large enough that exp underflows to exactly 0 after softmax


def _stl_shapes(config: StunetConfig, level: int) -> dict:
    c = config.level_channels(level)
    heads = config.heads_per_level[level - 1]
    hidden = config.mlp_hidden(level)
    w = config.window_size
    return {
        "ln1.g": (c,), "ln1.b": (c,),
        "q.w": (c, c), "q.b": (c,),
        "k.w": (c, c), "k.b": (c,),
        "v.w": (c, c), "v.b": (c,),
        "proj.w": (c, c), "proj.b": (c,),
        "bias_table": ((2 * w - 1) ** 2, heads),
        "ln2.g": (c,), "ln2.b": (c,),
        "fc1.w": (c, hidden), "fc1.b": (hidden,),
        "fc2.w": (hidden, c), "fc2.b": (c,),
    }


def param_specs(config: StunetConfig) -> list:
    """Canonical (name, shape) list; also the checkpoint serialization order."""
    c = config.base_channels
    ci = config.image_channels
    specs = [("embed.w", (c, ci, 3, 3)), ("embed.b", (c,))]
    for level in range(1, LEVELS + 1):
        shapes = _stl_shapes(config, level)
        for j in range(config.stl_counts[level - 1]):
            specs.extend((f"enc{level}.stl{j}.{k}", shapes[k]) for k in STL_PARAMS)
        if level < LEVELS:
            cl = config.level_channels(level)
            specs.append((f"down{level}.w", (2 * cl, 4 * cl, 1, 1)))
            specs.append((f"down{level}.b", (2 * cl,)))
    for level in (3, 2, 1):
        cl = config.level_channels(level)
        above = config.level_channels(level + 1)
        specs.append((f"up{level}.w", (cl, above // 4, 1, 1)))
        specs.append((f"up{level}.b", (cl,)))
        shapes = _stl_shapes(config, level)
        for j in range(config.stl_counts[level - 1]):
            specs.extend((f"dec{level}.stl{j}.{k}", shapes[k]) for k in STL_PARAMS)
    specs.append(("restore.w", (ci, c, 3, 3)))
    specs.append(("restore.b", (ci,)))
    return specs


class StunetWeights:
    """All learnable parameters, in the canonical order of param_specs."""

    def __init__(self, config: StunetConfig, params: OrderedDict):
        self.config = config
        self.params = params

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def items(self):
        return self.params.items()

    def sub(self, prefix: str) -> dict:
        plen = len(prefix)
        return {name[plen:]: t for name, t in self.params.items()
                if name.startswith(prefix)}

    def zero_grads(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for name, t in self.params.items():
            digest.update(name.encode())
            digest.update(t.data.tobytes())
        return digest.hexdigest()

    def copy(self) -> "StunetWeights":
        params = OrderedDict((name, Tensor(t.data.copy(), requires_grad=True))
                             for name, t in self.params.items())
        return StunetWeights(self.config, params)

    def parameter_count(self) -> int:
        return sum(t.size for t in self.params.values())


def _replicate_tap(out_ch: int, in_ch: int, k: int) -> np.ndarray:
    w = np.zeros((out_ch, in_ch, k, k))
    for o in range(out_ch):
        w[o, o % in_ch, k // 2, k // 2] = 1.0
    return w


def _average_tap(out_ch: int, in_ch: int, k: int) -> np.ndarray:
    w = np.zeros((out_ch, in_ch, k, k))
    counts = [len([i for i in range(in_ch) if i % out_ch == o]) for o in range(out_ch)]
    for i in range(in_ch):
        o = i % out_ch
        w[o, i, k // 2, k // 2] = 1.0 / counts[o]
    return w


def build(config: StunetConfig, seed: int) -> StunetWeights:
    """Deterministic initialization; identical (config, seed) give identical bits."""
    config.validate()
    rng = np.random.Generator(np.random.Philox(key=seed & ((1 << 64) - 1)))

    def trunc_normal(shape):
        return np.clip(rng.normal(0.0, 0.02, size=shape), -0.04, 0.04)

    params = OrderedDict()
    for name, shape in param_specs(config):
        if name == "embed.w":
            value = _replicate_tap(*shape[:2], shape[2])
        elif name == "restore.w":
            # the aggregate is shallow + decoded ~ 2x the embedding at init,
            # so averaging the replicas back includes a factor 1/2
            value = 0.5 * _average_tap(*shape[:2], shape[2])
        elif name.endswith(("proj.w", "fc2.w")):
            value = np.zeros(shape)
        elif name.endswith(("ln1.g", "ln2.g")):
            value = np.ones(shape)
        elif name.endswith((".b", "bias_table")):
            value = np.zeros(shape)
        else:
            value = trunc_normal(shape)
        params[name] = Tensor(value, requires_grad=True)
    return StunetWeights(config, params)


@lru_cache(maxsize=64)
def relative_position_index(window: int) -> np.ndarray:
    """(w^2 * w^2,) flat index into the (2w-1)^2-row bias table."""
    coords = np.stack(np.meshgrid(np.arange(window), np.arange(window),
                                  indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :]
    idx = (rel[0] + window - 1) * (2 * window - 1) + (rel[1] + window - 1)
    return idx.reshape(-1)


@lru_cache(maxsize=64)
def shift_attention_mask(h: int, w: int, window: int, shift: int) -> np.ndarray:
    """(num_windows, w^2, w^2) additive mask: 0 within a region, -1e9 across
    the wrap boundary introduced by the cyclic shift."""
    canvas = np.zeros((h, w))
    region = 0
    spans = (slice(0, -window), slice(-window, -shift), slice(-shift, None))
    for ys in spans:
        for xs in spans:
            canvas[ys, xs] = region
            region += 1
    tiles = (canvas.reshape(h // window, window, w // window, window)
             .transpose(0, 2, 1, 3).reshape(-1, window * window))
    different = tiles[:, :, None] != tiles[:, None, :]
    return np.where(different, MASK_VALUE, 0.0)


def window_attention(x: Tensor, params: dict, heads: int, window: int,
                     mask: np.ndarray | None = None,
                     return_weights: bool = False):
    """Per-head softmax(QK^T/sqrt(d) + B [+ mask]) V over w^2-token windows,
    heads concatenated and output-projected."""
    batch, tokens, channels = x.shape
    if tokens != window * window:
        raise DimensionError(
            f"window_attention: token axis {tokens} != window^2 = {window * window}")
    if channels % heads:
        raise DimensionError(
            f"window_attention: channels {channels} not divisible by {heads} heads")
    d = channels // heads

    def split_heads(t: Tensor) -> Tensor:
        return ad.permute(ad.reshape(t, (batch, tokens, heads, d)), (0, 2, 1, 3))

    q = split_heads(ad.linear(x, params["q.w"], params["q.b"]))
    k = split_heads(ad.linear(x, params["k.w"], params["k.b"]))
    v = split_heads(ad.linear(x, params["v.w"], params["v.b"]))
    logits = ad.mul(ad.matmul(q, ad.permute(k, (0, 1, 3, 2))), 1.0 / math.sqrt(d))

    bias = ad.gather_rows(params["bias_table"], relative_position_index(window))
    bias = ad.reshape(ad.permute(ad.reshape(bias, (tokens, tokens, heads)),
                                 (2, 0, 1)), (1, heads, tokens, tokens))
    logits = ad.add(logits, bias)

    if mask is not None:
        n_win = mask.shape[0]
        if batch % n_win:
            raise DimensionError(
                f"window_attention: batch {batch} not a multiple of {n_win} masked windows")
        images = batch // n_win
        logits = ad.reshape(logits, (images, n_win, heads, tokens, tokens))
        logits = ad.add(logits, Tensor(mask[None, :, None]))
        logits = ad.reshape(logits, (batch, heads, tokens, tokens))

    weights = ad.softmax_last(logits)
    out = ad.matmul(weights, v)
    out = ad.reshape(ad.permute(out, (0, 2, 1, 3)), (batch, tokens, channels))
    out = ad.linear(out, params["proj.w"], params["proj.b"])
    if return_weights:
        return out, weights.data
    return out


def stl_forward(x: Tensor, params: dict, heads: int, window: int,
                shifted: bool) -> Tensor:
    """LN -> (shift) -> window MSA -> (unshift) -> residual, then
    LN -> MLP -> residual. Shifted layers roll by window//2 with a boundary
    mask; a level whose extent equals the window keeps shift 0 (a lone
    window has no cross-window boundary to connect)."""
    _, h, w, _ = x.shape
    shift = window // 2 if shifted and min(h, w) > window else 0

    y = ad.layer_norm(x, params["ln1.g"], params["ln1.b"])
    if shift:
        y = ad.cyclic_shift(y, -shift, -shift)
    win = ad.window_partition(y, window)
    mask = shift_attention_mask(h, w, window, shift) if shift else None
    attn = window_attention(win, params, heads, window, mask)
    y = ad.window_reverse(attn, window, h, w)
    if shift:
        y = ad.cyclic_shift(y, shift, shift)
    x = ad.add(x, y)

    y = ad.layer_norm(x, params["ln2.g"], params["ln2.b"])
    y = ad.linear(ad.gelu(ad.linear(y, params["fc1.w"], params["fc1.b"])),
                  params["fc2.w"], params["fc2.b"])
    return ad.add(x, y)


def stb_forward(x: Tensor, weights: StunetWeights, stage: str, level: int) -> Tensor:
    """Sequential transformer layers, alternating unshifted/shifted."""
    config = weights.config
    heads = config.heads_per_level[level - 1]
    for j in range(config.stl_counts[level - 1]):
        params = weights.sub(f"{stage}{level}.stl{j}.")
        x = stl_forward(x, params, heads, config.window_size, shifted=bool(j % 2))
    return x


def _nhwc(x: Tensor) -> Tensor:
    return ad.permute(x, (0, 2, 3, 1))


def _nchw(x: Tensor) -> Tensor:
    return ad.permute(x, (0, 3, 1, 2))


def forward(weights: StunetWeights, batch, probes: dict | None = None) -> Tensor:
    """Full restoration pass on an NCHW batch in [0,1]; returns NCHW."""
    config = weights.config
    x = batch if isinstance(batch, Tensor) else Tensor(batch)
    h, w = config.input_size
    if x.ndim != 4 or x.shape[1] != config.image_channels or x.shape[2:] != (h, w):
        raise DimensionError(
            f"forward expects (N, {config.image_channels}, {h}, {w}), got {x.shape}")

    def probe(name: str, t: Tensor) -> None:
        if probes is not None:
            probes[name] = (t.shape[1], t.shape[2], t.shape[3])  # H, W, C of NHWC

    shallow = ad.conv2d(x, weights["embed.w"], weights["embed.b"], padding=1)
    feat = _nhwc(shallow)
    probe("C0", feat)

    skips = {}
    for level in range(1, LEVELS + 1):
        if level > 1:
            down = ad.pixel_unshuffle(_nchw(feat), 2)
            down = ad.conv2d(down, weights[f"down{level - 1}.w"],
                             weights[f"down{level - 1}.b"], padding=0)
            feat = _nhwc(down)
        feat = stb_forward(feat, weights, "enc", level)
        probe(f"e{level}", feat)
        skips[level] = feat

    for level in (3, 2, 1):
        up = ad.pixel_shuffle(_nchw(feat), 2)
        up = ad.conv2d(up, weights[f"up{level}.w"], weights[f"up{level}.b"],
                       padding=0)
        feat = ad.add(_nhwc(up), skips[level])
        feat = stb_forward(feat, weights, "dec", level)
        probe(f"d{level}", feat)

    aggregated = ad.add(shallow, _nchw(feat))
    if probes is not None:
        probes["agg"] = (aggregated.shape[2], aggregated.shape[3], aggregated.shape[1])
    return ad.conv2d(aggregated, weights["restore.w"], weights["restore.b"],
                     padding=1)


def restore(weights: StunetWeights, batch: np.ndarray) -> np.ndarray:
    """Inference: forward without recording, output clamped to [0,1]."""
    with no_grad():
        out = forward(weights, np.asarray(batch, dtype=np.float64))
    return np.clip(out.data, 0.0, 1.0)
