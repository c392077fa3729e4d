"""Dense float64 tensors with reverse-mode autodiff on an explicit tape.

Only the primitives the restoration network needs are provided: conv2d,
linear, layer norm, softmax, GELU, pixel (un)shuffle, window partition /
reverse, cyclic shifts, row gather, elementwise arithmetic with numpy
broadcasting, and scalar reductions.

Ops executed while a ``Tape`` is active record nodes on it; with no active
tape they are plain numpy forward computations (inference mode). Reshape and
permute materialize copies - there are no aliased views, which keeps the
backward pass free of hidden write conflicts. Tensor data is treated as
immutable after creation; only ``grad`` buffers mutate. A tape must stay on
one thread; independent tapes may run concurrently.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np
from scipy.special import erf

from .errors import ContractError, DimensionError

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

_state = threading.local()


def _tape_stack() -> list:
    if not hasattr(_state, "stack"):
        _state.stack = []
    return _state.stack


def active_tape():
    """The innermost active Tape on this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


@contextmanager
def no_grad():
    """Suppress recording even if an outer Tape is active."""
    _tape_stack().append(None)
    try:
        yield
    finally:
        _tape_stack().pop()


class Tensor:
    """N-D dense float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return self.data.item()

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


class _Node:
    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs, output, backward_fn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of executed ops; replayed in reverse by backward()."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _tape_stack().pop()

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(t) into t.grad for every reachable tensor.

        loss must be a scalar produced on this tape. Repeated calls without
        zeroing grads accumulate.
        """
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {id(loss): loss}
        produced = {id(node.output) for node in self.nodes}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            leaves.pop(id(node.output), None)
            if g is None:
                continue
            node.output.accumulate_grad(g)
            in_grads = node.backward_fn(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                    leaves[key] = t
        # whatever is left was never produced by a node on this tape: leaf params
        for key, t in leaves.items():
            if id(t) not in produced:
                t.accumulate_grad(grads[key])


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _record(out: Tensor, inputs: tuple, backward_fn) -> Tensor:
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.nodes.append(_Node(inputs, out, backward_fn))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to `shape`, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data)

    def backward(g):
        return (_unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape))

    return _record(out, (a, b), backward)


def absolute(a: Tensor) -> Tensor:
    """|a| elementwise. Subgradient at 0 is 0 (np.sign convention)."""
    out = Tensor(np.abs(a.data))
    sign = np.sign(a.data)

    def backward(g):
        return (g * sign,)

    return _record(out, (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(a.data.sum())

    def backward(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record(out, (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    n = a.size
    out = Tensor(a.data.mean())

    def backward(g):
        return (np.broadcast_to(g / n, a.shape).copy(),)

    return _record(out, (a,), backward)


# ---------------------------------------------------------------------------
# shape manipulation (always materializes copies)

def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = Tensor(a.data.reshape(shape).copy())
    orig = a.shape

    def backward(g):
        return (g.reshape(orig),)

    return _record(out, (a,), backward)


def permute(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    out = Tensor(np.transpose(a.data, axes).copy())
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse).copy(),)

    return _record(out, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes (numpy semantics)."""
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul inner axes differ: {a.shape[-1]} (a axis {a.ndim - 1}) "
            f"vs {b.shape[-2]} (b axis {b.ndim - 2})")
    out = Tensor(np.matmul(a.data, b.data))

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(out, (a, b), backward)


def gather_rows(table: Tensor, index: np.ndarray) -> Tensor:
    """out[i] = table[index[i]]; backward scatter-adds into the table."""
    index = np.asarray(index)
    if index.ndim != 1:
        raise DimensionError(f"gather_rows index must be 1-D, got {index.ndim}-D")
    rows = table.shape[0]
    if index.size and (index.min() < 0 or index.max() >= rows):
        raise DimensionError(f"gather_rows index out of range for {rows} rows")
    out = Tensor(table.data[index])

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, index, g)
        return (gt,)

    return _record(out, (table,), backward)


# ---------------------------------------------------------------------------
# neural primitives

def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map over the last axis: x @ weight + bias."""
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(
            f"linear: input last axis {x.shape[-1]} != weight rows {weight.shape[0]}")
    if bias.shape != (weight.shape[1],):
        raise DimensionError(
            f"linear: bias shape {bias.shape} != ({weight.shape[1]},)")
    out = Tensor(x.data @ weight.data + bias.data)

    def backward(g):
        gx = g @ weight.data.T
        x2 = x.data.reshape(-1, x.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        gw = x2.T @ g2
        gb = g2.sum(axis=0)
        return gx, gw, gb

    return _record(out, (x, weight, bias), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize each last-axis slice to zero mean / unit variance, then scale-shift."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(
            f"layer_norm: gamma/beta must have shape ({d},), got {gamma.shape}/{beta.shape}")
    if eps <= 0:
        raise ContractError("layer_norm eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gamma.data + beta.data)

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        ggamma = (g * xhat).sum(axis=lead)
        gbeta = g.sum(axis=lead)
        gxhat = g * gamma.data
        gx = inv * (gxhat
                    - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        return gx, ggamma, gbeta

    return _record(out, (x, gamma, beta), backward)


def softmax_last(x: Tensor) -> Tensor:
    """Stabilized softmax over the last axis."""
    if x.shape[-1] == 0:
        raise DimensionError("softmax_last: empty last axis")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def backward(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    return _record(out, (x,), backward)


def gelu(x: Tensor) -> Tensor:
    """x * Phi(x) with the exact Gaussian CDF (erf form)."""
    phi_cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))
    out = Tensor(x.data * phi_cdf)
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
    deriv = phi_cdf + x.data * pdf

    def backward(g):
        return (g * deriv,)

    return _record(out, (x,), backward)


def _im2col(padded: np.ndarray, k: int, oh: int, ow: int) -> np.ndarray:
    n, c = padded.shape[:2]
    cols = np.empty((n, c, k, k, oh, ow), dtype=np.float64)
    for ky in range(k):
        for kx in range(k):
            cols[:, :, ky, kx] = padded[:, :, ky:ky + oh, kx:kx + ow]
    return cols.reshape(n, c * k * k, oh * ow)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, padding: int = 0) -> Tensor:
    """2-D convolution, NCHW input, OIkk weight, stride 1, zero padding."""
    if x.ndim != 4:
        raise DimensionError(f"conv2d: input must be 4-D NCHW, got {x.ndim}-D")
    if weight.ndim != 4:
        raise DimensionError(f"conv2d: weight must be 4-D OIkk, got {weight.ndim}-D")
    o, i, kh, kw = weight.shape
    if kh != kw:
        raise DimensionError(f"conv2d: kernel must be square, got {kh}x{kw} (axes 2,3)")
    if x.shape[1] != i:
        raise DimensionError(
            f"conv2d: input channels (axis 1) {x.shape[1]} != weight input channels {i}")
    if bias.shape != (o,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} != ({o},)")
    n, _, h, w = x.shape
    k = kh
    oh = h + 2 * padding - k + 1
    ow = w + 2 * padding - k + 1
    if oh <= 0 or ow <= 0:
        raise DimensionError(f"conv2d: kernel {k} too large for padded input {h}x{w}")
    if padding:
        padded = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        padded = x.data
    cols = _im2col(padded, k, oh, ow)      # (N, I*k*k, oh*ow)
    w2 = weight.data.reshape(o, i * k * k)
    out2 = np.matmul(w2, cols) + bias.data[:, None]
    out = Tensor(out2.reshape(n, o, oh, ow))

    def backward(g):
        g2 = g.reshape(n, o, oh * ow)
        gb = g2.sum(axis=(0, 2))
        gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(o, i, k, k)
        gcols = np.matmul(w2.T, g2).reshape(n, i, k, k, oh, ow)
        gpad = np.zeros_like(padded)
        for ky in range(k):
            for kx in range(k):
                gpad[:, :, ky:ky + oh, kx:kx + ow] += gcols[:, :, ky, kx]
        if padding:
            gx = gpad[:, :, padding:padding + h, padding:padding + w]
        else:
            gx = gpad
        return gx, gw, gb

    return _record(out, (x, weight, bias), backward)


# ---------------------------------------------------------------------------
# lossless rearrangements

def _unshuffle_data(d: np.ndarray, r: int) -> np.ndarray:
    n, c, h, w = d.shape
    d = d.reshape(n, c, h // r, r, w // r, r)
    d = d.transpose(0, 1, 3, 5, 2, 4)
    return d.reshape(n, c * r * r, h // r, w // r).copy()


def _shuffle_data(d: np.ndarray, r: int) -> np.ndarray:
    n, crr, h, w = d.shape
    c = crr // (r * r)
    d = d.reshape(n, c, r, r, h, w)
    d = d.transpose(0, 1, 4, 2, 5, 3)
    return d.reshape(n, c, h * r, w * r).copy()


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Space-to-depth: N x C x H x W -> N x C*r^2 x H/r x W/r."""
    if x.ndim != 4:
        raise DimensionError(f"pixel_unshuffle: input must be 4-D, got {x.ndim}-D")
    n, c, h, w = x.shape
    if h % r or w % r:
        raise DimensionError(
            f"pixel_unshuffle: r={r} must divide spatial extents {h}x{w} (axes 2,3)")
    out = Tensor(_unshuffle_data(x.data, r))

    def backward(g):
        return (_shuffle_data(g, r),)

    return _record(out, (x,), backward)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Depth-to-space: N x C*r^2 x H x W -> N x C x H*r x W*r."""
    if x.ndim != 4:
        raise DimensionError(f"pixel_shuffle: input must be 4-D, got {x.ndim}-D")
    if x.shape[1] % (r * r):
        raise DimensionError(
            f"pixel_shuffle: channel count {x.shape[1]} (axis 1) not divisible by r^2={r * r}")
    out = Tensor(_shuffle_data(x.data, r))

    def backward(g):
        return (_unshuffle_data(g, r),)

    return _record(out, (x,), backward)


def _partition_data(d: np.ndarray, w: int) -> np.ndarray:
    n, h, ww, c = d.shape
    d = d.reshape(n, h // w, w, ww // w, w, c)
    d = d.transpose(0, 1, 3, 2, 4, 5)
    return d.reshape(-1, w * w, c).copy()


def _reverse_data(d: np.ndarray, w: int, h: int, ww: int) -> np.ndarray:
    c = d.shape[-1]
    n = d.shape[0] // ((h // w) * (ww // w))
    d = d.reshape(n, h // w, ww // w, w, w, c)
    d = d.transpose(0, 1, 3, 2, 4, 5)
    return d.reshape(n, h, ww, c).copy()


def window_partition(x: Tensor, w: int) -> Tensor:
    """Tile N x H x W x C into (N*H*W/w^2) x w^2 x C token windows."""
    if x.ndim != 4:
        raise DimensionError(f"window_partition: input must be 4-D NHWC, got {x.ndim}-D")
    n, h, ww, c = x.shape
    if h % w or ww % w:
        raise DimensionError(
            f"window_partition: window {w} must divide spatial extents {h}x{ww} (axes 1,2)")
    out = Tensor(_partition_data(x.data, w))

    def backward(g):
        return (_reverse_data(g, w, h, ww),)

    return _record(out, (x,), backward)


def window_reverse(x: Tensor, w: int, h: int, ww: int) -> Tensor:
    """Inverse of window_partition for an H x W canvas."""
    if x.ndim != 3:
        raise DimensionError(f"window_reverse: input must be 3-D, got {x.ndim}-D")
    if x.shape[1] != w * w:
        raise DimensionError(
            f"window_reverse: token axis {x.shape[1]} != w^2 = {w * w}")
    if x.shape[0] % ((h // w) * (ww // w)):
        raise DimensionError("window_reverse: window count does not tile the canvas")
    out = Tensor(_reverse_data(x.data, w, h, ww))

    def backward(g):
        return (_partition_data(g, w),)

    return _record(out, (x,), backward)


def cyclic_shift(x: Tensor, dy: int, dx: int) -> Tensor:
    """Toroidal roll of the spatial axes of an NHWC tensor."""
    if x.ndim != 4:
        raise DimensionError(f"cyclic_shift: input must be 4-D NHWC, got {x.ndim}-D")
    out = Tensor(np.roll(x.data, (dy, dx), axis=(1, 2)))

    def backward(g):
        return (np.roll(g, (-dy, -dx), axis=(1, 2)),)

    return _record(out, (x,), backward)
