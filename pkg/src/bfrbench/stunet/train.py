"""L1-loss SGD training loop over manifest pairs.

Plain stochastic gradient descent by default; momentum is exposed but off.
Shuffling, batching, and therefore final weights are a pure function of
(manifest, config, seed).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tape, Tensor
from ..errors import TrainingError
from ..harness.imageio import load_image
from .model import StunetWeights, forward


def l1_loss(pred: Tensor, target) -> Tensor:
    target = target if isinstance(target, Tensor) else Tensor(target)
    return ad.mean_all(ad.absolute(ad.sub(pred, target)))


def sgd_update(weights: StunetWeights, lr: float, momentum: float = 0.0,
               velocity: dict | None = None) -> None:
    for name, p in weights.items():
        if p.grad is None:
            continue
        if momentum > 0.0 and velocity is not None:
            v = velocity.get(name)
            v = p.grad.copy() if v is None else momentum * v + p.grad
            velocity[name] = v
            p.data -= lr * v
        else:
            p.data -= lr * p.grad
    weights.zero_grads()


def train_step(weights: StunetWeights, lq_batch, gt_batch, lr: float,
               momentum: float = 0.0, velocity: dict | None = None) -> float:
    """One forward/backward/update; returns the pre-update loss."""
    if lr < 0:
        raise TrainingError(f"learning rate must be >= 0, got {lr}")
    with Tape() as tape:
        out = forward(weights, lq_batch)
        loss = l1_loss(out, gt_batch)
    value = loss.item()
    if not math.isfinite(value):
        raise TrainingError(
            f"non-finite loss {value}; output range "
            f"[{np.min(out.data):.3g}, {np.max(out.data):.3g}]")
    tape.backward(loss)
    sgd_update(weights, lr, momentum, velocity)
    return value


@dataclass
class TrainLog:
    records: list = field(default_factory=list)   # {"epoch", "iter", "loss"}
    warnings: list = field(default_factory=list)

    def add(self, epoch: int, iteration: int, loss: float) -> None:
        self.records.append({"epoch": epoch, "iter": iteration, "loss": loss})

    def epoch_means(self) -> list:
        means = []
        epoch = 0
        while True:
            losses = [r["loss"] for r in self.records if r["epoch"] == epoch]
            if not losses:
                return means
            means.append(sum(losses) / len(losses))
            epoch += 1

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.records:
                fh.write(json.dumps(record) + "\n")


def _load_pair(row: dict):
    lq = load_image(row["lq"]).transpose(2, 0, 1)
    gt = load_image(row["hq"]).transpose(2, 0, 1)
    return lq, gt


def train(weights: StunetWeights, rows: list, epochs: int, lr: float,
          batch_size: int = 4, seed: int = 0, momentum: float = 0.0,
          strict: bool = False, on_iteration=None) -> TrainLog:
    """Epoch/iteration double loop with deterministic per-epoch shuffling.

    Unreadable pairs are skipped with a warning unless `strict`. epochs=0
    leaves the weights untouched and returns an empty log.
    """
    log = TrainLog()
    if epochs == 0:
        return log
    pairs = []
    for row in rows:
        try:
            pairs.append(_load_pair(row))
        except Exception as exc:
            if strict:
                raise TrainingError(f"unreadable pair {row.get('id')}: {exc}") from exc
            log.warnings.append(f"skipping pair {row.get('id')}: {exc}")
    if not pairs:
        raise TrainingError("no readable training pairs")
    rng = np.random.Generator(np.random.Philox(key=seed & ((1 << 64) - 1)))
    velocity: dict = {}
    for epoch in range(epochs):
        order = rng.permutation(len(pairs))
        for iteration, start in enumerate(range(0, len(pairs), batch_size)):
            chosen = order[start:start + batch_size]
            lq = np.stack([pairs[i][0] for i in chosen])
            gt = np.stack([pairs[i][1] for i in chosen])
            try:
                loss = train_step(weights, lq, gt, lr, momentum, velocity)
            except TrainingError as exc:
                raise TrainingError(
                    f"epoch {epoch} iteration {iteration}: {exc}") from exc
            log.add(epoch, iteration, loss)
            if on_iteration is not None:
                on_iteration(epoch, iteration, loss)
    return log
