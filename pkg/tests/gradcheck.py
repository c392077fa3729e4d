"""Central finite-difference gradient oracle, independent of the tape.

The oracle only ever calls the forward computation; it never looks at tape
gradients, so agreement between the two is a real cross-check.
"""

import numpy as np

from bfrbench.autodiff import Tape, Tensor

EPS = 1e-5


def numerical_grad(f, x: np.ndarray, eps: float = EPS) -> np.ndarray:
    """d f / d x by central differences; f maps ndarray -> float."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise relative error with an absolute floor for tiny grads."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.abs(a) + np.abs(b), 1e-6)
    return float(np.max(np.abs(a - b) / denom))


def tape_grads(op, args, wrt):
    """Run sum(op(*args)) under a tape and return grads of the `wrt` tensors."""
    from bfrbench.autodiff import sum_all

    with Tape() as tape:
        out = op(*args)
        loss = sum_all(out)
    tape.backward(loss)
    return [t.grad for t in wrt]


def stunet_fd_check(weights, x, gt, samples_per_tensor: int = 6,
                    eps: float = EPS, seed: int = 0) -> float:
    """Max relative error between tape gradients of the L1 training loss and
    central finite differences, sampling coordinates of every parameter."""
    from bfrbench.stunet.model import forward
    from bfrbench.stunet.train import l1_loss

    with Tape() as tape:
        loss = l1_loss(forward(weights, x), gt)
    tape.backward(loss)
    grads = {name: t.grad.copy() for name, t in weights.items()}
    weights.zero_grads()

    def loss_now() -> float:
        return l1_loss(forward(weights, x), gt).item()

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, t in weights.items():
        flat = t.data.reshape(-1)
        gflat = grads[name].reshape(-1)
        count = min(samples_per_tensor, flat.size)
        for i in rng.choice(flat.size, size=count, replace=False):
            orig = flat[i]
            flat[i] = orig + eps
            fp = loss_now()
            flat[i] = orig - eps
            fm = loss_now()
            flat[i] = orig
            num = (fp - fm) / (2.0 * eps)
            err = abs(gflat[i] - num) / max(abs(gflat[i]), abs(num), 1e-6)
            worst = max(worst, err)
    return worst


def check_op(op, arrays, wrt_idx, eps: float = EPS):
    """Compare tape grads of sum(op(...)) against finite differences.

    arrays: list of ndarrays (op inputs, in order).
    wrt_idx: indices of inputs to differentiate with respect to.
    Returns the max relative error across all checked inputs.
    """
    tensors = [Tensor(a, requires_grad=(i in wrt_idx)) for i, a in enumerate(arrays)]
    grads = tape_grads(op, tensors, [tensors[i] for i in wrt_idx])
    worst = 0.0
    for slot, idx in enumerate(wrt_idx):
        def f(x, idx=idx):
            probe = [Tensor(a) for a in arrays]
            probe[idx] = Tensor(x)
            return float(np.sum(op(*probe).data))

        num = numerical_grad(f, arrays[idx].copy(), eps)
        worst = max(worst, rel_err(grads[slot], num))
    return worst
