"""Figure rendering for the CLI report path.

The delimited files (history CSV, ROC CSV) are the normative outputs;
the PNGs here are a convenience rendering of the same data, written next
to them. Nothing in the library layer depends on this module.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import RocCurve
from .training import TrainHistory


def render_history(history: TrainHistory, loss_path, acc_path) -> None:
    """Loss and accuracy curves (train and validation) as two PNG files."""
    epochs = [r.epoch for r in history.records]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [r.train_loss for r in history.records], label="train")
    ax.plot(epochs, [r.val_loss for r in history.records], label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("binary cross-entropy")
    ax.set_title("Loss during training")
    ax.legend()
    fig.tight_layout()
    fig.savefig(loss_path)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [r.train_acc for r in history.records], label="train")
    ax.plot(epochs, [r.val_acc for r in history.records], label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_title("Accuracy during training")
    ax.legend()
    fig.tight_layout()
    fig.savefig(acc_path)
    plt.close(fig)


def render_roc(curve: RocCurve, path, title: str = "ROC curve") -> None:
    """The ROC polyline with its AUC in the legend, as one PNG file."""
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    xs = [p[0] for p in curve.points]
    ys = [p[1] for p in curve.points]
    ax.plot(xs, ys, marker=".", label=f"AUC = {curve.auc:.4f}")
    ax.plot([0, 1], [0, 1], linestyle=":", linewidth=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
