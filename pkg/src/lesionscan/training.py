"""Loss, optimizer, and the mini-batch training loop.

Training minimizes binary cross-entropy with classical momentum SGD
(v <- momentum*v + g; w <- w - lr*v). Defaults follow the stack's stated
hyperparameters: learning rate 0.001, momentum 0.9, 100 epochs, batch
size 32, dropout 0.5, decision threshold 0.5.

Everything here is deterministic for a fixed config: the epoch shuffles
and the dropout draws both come from per-epoch generators spawned off
config.seed, so two runs with the same inputs produce bitwise-identical
histories and weights (single-threaded).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import network as network_mod
from .errors import ConfigError, DivergenceError, ShapeError
from .network import NetworkState
from .tensor import Tensor

_EPS = 1e-12
_HISTORY_FIELDS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 0.001
    momentum: float = 0.9
    dropout_rate: float = 0.5
    seed: int = 0
    threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must be in (0, 1), got {self.threshold}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float

    def __post_init__(self) -> None:
        values = (self.train_loss, self.train_acc, self.val_loss, self.val_acc)
        if not all(math.isfinite(v) for v in values):
            raise ConfigError(f"epoch record holds a non-finite value: {self}")


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)


class MomentumState:
    """Per-parameter velocity tensors, zero-initialized, shape-locked."""

    def __init__(self, velocities: list[dict[str, Tensor] | None]):
        self.velocities = velocities

    @classmethod
    def for_network(cls, net: NetworkState) -> "MomentumState":
        vel: list[dict[str, Tensor] | None] = []
        for p in net.params:
            if p is None:
                vel.append(None)
            else:
                vel.append({name: np.zeros_like(t) for name, t in p.tensors().items()})
        return cls(vel)


def bce_loss(score: float, label: float) -> float:
    """Binary cross-entropy of one prediction, clamped away from the poles."""
    p = min(max(score, _EPS), 1.0 - _EPS)
    return -(label * math.log(p) + (1.0 - label) * math.log(1.0 - p))


def bce_loss_batch(scores: Tensor, labels: Tensor) -> float:
    """Mean binary cross-entropy over a batch of scores."""
    if scores.shape != labels.shape:
        raise ShapeError(f"scores {scores.shape} vs labels {labels.shape}")
    p = np.clip(scores, _EPS, 1.0 - _EPS)
    return float(np.mean(-(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p))))


def bce_grad_batch(scores: Tensor, labels: Tensor) -> Tensor:
    """d(mean BCE)/d(score), evaluated at the clamped scores."""
    p = np.clip(scores, _EPS, 1.0 - _EPS)
    return (p - labels) / (p * (1.0 - p)) / scores.shape[0]


def sgd_step(
    params: list,
    grads: list[dict[str, Tensor] | None],
    vel: MomentumState,
    lr: float,
    momentum: float,
) -> None:
    """One in-place momentum update: v <- momentum*v + g; w <- w - lr*v.

    With momentum 0 this is exactly vanilla gradient descent. This is the
    single sanctioned mutation of network parameters.
    """
    if len(params) != len(grads) or len(params) != len(vel.velocities):
        raise ShapeError(
            f"params/grads/velocities length mismatch: "
            f"{len(params)}/{len(grads)}/{len(vel.velocities)}"
        )
    for p, g, v in zip(params, grads, vel.velocities):
        if p is None:
            if g is not None:
                raise ShapeError("gradient supplied for a parameterless layer")
            continue
        if g is None or v is None:
            raise ShapeError("missing gradient or velocity for a parameterized layer")
        tensors = p.tensors()
        for name, w in tensors.items():
            if g[name].shape != w.shape or v[name].shape != w.shape:
                raise ShapeError(
                    f"{name}: param {w.shape}, grad {g[name].shape}, velocity {v[name].shape}"
                )
            v[name] *= momentum
            v[name] += g[name]
            w -= lr * v[name]


def evaluate(
    net: NetworkState, images: Tensor, labels: Tensor, threshold: float = 0.5
) -> tuple[float, float]:
    """(mean BCE loss, accuracy) of the network on a stack of patches.

    Pure inference: no dropout, no parameter mutation.
    """
    if images.shape[0] == 0:
        raise ConfigError("cannot evaluate on an empty set")
    scores = network_mod.score_patches(net, images)
    loss = bce_loss_batch(scores, labels)
    acc = float(np.mean((scores >= threshold) == (labels == 1.0)))
    return loss, acc


def train(net: NetworkState, train_set, val_set, cfg: TrainConfig) -> TrainHistory:
    """Run cfg.epochs epochs of seeded mini-batch SGD; returns the history.

    ``train_set`` and ``val_set`` are PatchDataset-like objects exposing
    ``images()`` -> (N, H, W, C) and ``labels()`` -> (N,). The training set
    must contain both classes; the validation set must be non-empty (it is
    scored, in inference mode, after every epoch and never trained on).
    Train loss/accuracy are running averages over the epoch's batches,
    measured on the pre-update forward pass of each batch.

    Raises DivergenceError naming the epoch and batch if any loss goes
    non-finite. Leaves the network in infer mode.
    """
    x_train, y_train = train_set.images(), train_set.labels()
    x_val, y_val = val_set.images(), val_set.labels()
    n = x_train.shape[0]
    if n == 0:
        raise ConfigError("training set is empty")
    if len(np.unique(y_train)) < 2:
        raise ConfigError("training set contains a single class; need both")
    if x_val.shape[0] == 0:
        raise ConfigError("validation set is empty")

    vel = MomentumState.for_network(net)
    epoch_seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.epochs)
    history = TrainHistory()
    net.mode = "train"
    try:
        for epoch in range(1, cfg.epochs + 1):
            rng = np.random.default_rng(epoch_seeds[epoch - 1])
            perm = rng.permutation(n)
            loss_sum = 0.0
            correct = 0
            for batch_idx, start in enumerate(range(0, n, cfg.batch_size), start=1):
                idx = perm[start : start + cfg.batch_size]
                xb, yb = x_train[idx], y_train[idx]
                scores, cache = network_mod.forward_batch(net, xb, training=True, rng=rng)
                loss = bce_loss_batch(scores, yb)
                if not math.isfinite(loss):
                    raise DivergenceError(
                        f"non-finite training loss at epoch {epoch}, batch {batch_idx}"
                    )
                grads = network_mod.backward_batch(net, cache, bce_grad_batch(scores, yb))
                sgd_step(net.params, grads, vel, cfg.learning_rate, cfg.momentum)
                loss_sum += loss * idx.shape[0]
                correct += int(np.sum((scores >= cfg.threshold) == (yb == 1.0)))
            val_loss, val_acc = evaluate(net, x_val, y_val, cfg.threshold)
            if not math.isfinite(val_loss):
                raise DivergenceError(f"non-finite validation loss after epoch {epoch}")
            history.records.append(
                EpochRecord(
                    epoch=epoch,
                    train_loss=loss_sum / n,
                    train_acc=correct / n,
                    val_loss=val_loss,
                    val_acc=val_acc,
                )
            )
    finally:
        net.mode = "infer"
    return history


def export_history(history: TrainHistory, path) -> None:
    """Write the history as CSV: epoch,train_loss,train_acc,val_loss,val_acc.

    Floats are written with repr precision so a round-trip through
    :func:`load_history` recovers them exactly.
    """
    if not history.records:
        raise ConfigError("refusing to export an empty history")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_HISTORY_FIELDS)
        for r in history.records:
            writer.writerow([r.epoch, repr(r.train_loss), repr(r.train_acc),
                             repr(r.val_loss), repr(r.val_acc)])


def load_history(path) -> TrainHistory:
    """Parse a history CSV written by :func:`export_history`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != _HISTORY_FIELDS:
        raise ConfigError(f"{path}: missing or wrong history header")
    history = TrainHistory()
    for row in rows[1:]:
        if len(row) != len(_HISTORY_FIELDS):
            raise ConfigError(f"{path}: malformed history row {row!r}")
        history.records.append(
            EpochRecord(int(row[0]), float(row[1]), float(row[2]), float(row[3]), float(row[4]))
        )
    if not history.records:
        raise ConfigError(f"{path}: history has a header but no rows")
    return history
