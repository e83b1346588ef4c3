"""Confusion-matrix indicators, ROC/AUC, and the k-fold evaluation runner.

Conventions: the positive class is "lesion" (label 1); a score at or
above the threshold predicts positive. Metrics with a zero denominator
come back as None (explicitly undefined, serialized as JSON null) rather
than a silent 0, 1, or NaN.

The ROC sweep walks the distinct scores in descending order with ties
grouped into a single step, so the trapezoidal area equals the
Mann-Whitney statistic P(score+ > score-) + 0.5 P(tie) exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from . import network as network_mod
from . import training as training_mod
from .dataset import PatchDataset, kfold
from .errors import ConfigError
from .training import TrainConfig


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ConfigError(f"confusion counts must be non-negative: {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricReport:
    """Derived indicators; None marks an undefined (zero-denominator) value."""

    sensitivity: float | None
    specificity: float | None
    precision: float | None
    accuracy: float | None
    recall: float | None
    f1: float | None

    def to_dict(self) -> dict:
        return {
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "precision": self.precision,
            "accuracy": self.accuracy,
            "recall": self.recall,
            "f1": self.f1,
        }


@dataclass(frozen=True)
class RocCurve:
    points: tuple[tuple[float, float], ...]
    auc: float


@dataclass(frozen=True)
class CrossValReport:
    k: int
    round_aucs: tuple[float, ...]
    mean_auc: float

    def __post_init__(self) -> None:
        if len(self.round_aucs) != self.k:
            raise ConfigError(f"expected {self.k} round AUCs, got {len(self.round_aucs)}")


def round_half_up(value: float, decimals: int = 2) -> float:
    """Display rounding where .5 always rounds away from zero upward."""
    q = Decimal(10) ** -decimals
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


def confusion(scored: list[tuple[float, int]], threshold: float = 0.5) -> ConfusionCounts:
    """Counts under "score >= threshold predicts lesion"."""
    if not scored:
        raise ConfigError("cannot build a confusion matrix from no scores")
    tp = fp = tn = fn = 0
    for score, label in scored:
        predicted = score >= threshold
        if label == 1:
            tp, fn = tp + predicted, fn + (not predicted)
        else:
            fp, tn = fp + predicted, tn + (not predicted)
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def report(c: ConfusionCounts) -> MetricReport:
    """sensitivity, specificity, precision, accuracy, recall, f1 from counts."""
    if c.total == 0:
        raise ConfigError("confusion counts are all zero; no metrics are defined")
    sensitivity = _ratio(c.tp, c.tp + c.fn)
    precision = _ratio(c.tp, c.tp + c.fp)
    if precision is None or sensitivity is None or precision + sensitivity == 0:
        f1 = None
    else:
        f1 = 2.0 * precision * sensitivity / (precision + sensitivity)
    return MetricReport(
        sensitivity=sensitivity,
        specificity=_ratio(c.tn, c.tn + c.fp),
        precision=precision,
        accuracy=(c.tp + c.tn) / c.total,
        recall=sensitivity,
        f1=f1,
    )


def roc(scored: list[tuple[float, int]]) -> RocCurve:
    """ROC curve and trapezoidal AUC from (score, label) pairs.

    One point per distinct score (descending sweep), endpoints exactly
    (0,0) and (1,1). Needs at least one sample of each class.
    """
    if not scored:
        raise ConfigError("cannot build a ROC curve from no scores")
    scores = np.array([s for s, _ in scored], dtype=np.float64)
    labels = np.array([l for _, l in scored], dtype=np.int64)
    n_pos = int(np.sum(labels == 1))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ConfigError("ROC needs both classes; got a single-class input")
    order = np.argsort(-scores, kind="stable")
    scores, labels = scores[order], labels[order]
    points: list[tuple[float, float]] = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < scores.size:
        j = i
        while j < scores.size and scores[j] == scores[i]:
            tp += int(labels[j] == 1)
            fp += int(labels[j] == 0)
            j += 1
        points.append((fp / n_neg, tp / n_pos))
        i = j
    points[-1] = (1.0, 1.0)  # exact endpoints; cumulative sums land here anyway
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return RocCurve(points=tuple(points), auc=auc)


def export_roc(curve: RocCurve, path) -> None:
    """Write the curve as CSV rows fpr,tpr with a trailing `# auc=` comment."""
    if not curve.points:
        raise ConfigError("refusing to export an empty ROC curve")
    with open(path, "w", newline="") as fh:
        fh.write("fpr,tpr\n")
        for x, y in curve.points:
            fh.write(f"{x!r},{y!r}\n")
        fh.write(f"# auc={curve.auc!r}\n")


def load_roc(path) -> RocCurve:
    """Parse a ROC CSV written by :func:`export_roc`."""
    with open(path) as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines or lines[0] != "fpr,tpr":
        raise ConfigError(f"{path}: missing fpr,tpr header")
    if not lines[-1].startswith("# auc="):
        raise ConfigError(f"{path}: missing trailing # auc= comment")
    auc = float(lines[-1].split("=", 1)[1])
    points = []
    for line in lines[1:-1]:
        x, y = line.split(",")
        points.append((float(x), float(y)))
    if not points:
        raise ConfigError(f"{path}: ROC file has no points")
    return RocCurve(points=tuple(points), auc=auc)


def export_report(rep: MetricReport, path, counts: ConfusionCounts | None = None) -> None:
    """Serialize a MetricReport (plus optional raw counts) as JSON."""
    payload = rep.to_dict()
    if counts is not None:
        payload["counts"] = {"tp": counts.tp, "fp": counts.fp, "tn": counts.tn, "fn": counts.fn}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_report(path) -> MetricReport:
    with open(path) as fh:
        payload = json.load(fh)
    kwargs = {}
    for name in ("sensitivity", "specificity", "precision", "accuracy", "recall", "f1"):
        if name not in payload:
            raise ConfigError(f"{path}: report is missing {name!r}")
        kwargs[name] = payload[name]
    return MetricReport(**kwargs)


# --- k-fold evaluation ---


def _stratified_val_carve(
    ds: PatchDataset, train_idx: np.ndarray, fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Split training-fold indices into (train, val), stratified per class.

    The last member of a class is never moved to val, so the training slice
    keeps every class the fold had. On folds too small to spare anything the
    carve comes back empty and the training slice doubles as the validation
    slice; that only happens in degenerate runs (one sample per class).
    """
    labels = ds.labels()
    val_parts: list[np.ndarray] = []
    train_parts: list[np.ndarray] = []
    for cls in (0, 1):
        members = train_idx[labels[train_idx] == cls]
        if members.size == 0:
            continue
        shuffled = members[rng.permutation(members.size)]
        n_val = min(int(math.floor(fraction * members.size + 0.5)), members.size - 1)
        val_parts.append(shuffled[:n_val])
        train_parts.append(shuffled[n_val:])
    train_out = np.sort(np.concatenate(train_parts))
    val_out = np.sort(np.concatenate(val_parts))
    if val_out.size == 0:
        val_out = train_out
    return train_out, val_out


def cross_validate_detailed(
    ds: PatchDataset, k: int, cfg: TrainConfig
) -> tuple[CrossValReport, list[RocCurve]]:
    """Train and score one fresh network per round; keep each round's ROC.

    Rounds rotate the held-out fold from the last to the first: round 1
    tests fold k, round 2 tests fold k-1, and so on. Each round carves a
    small stratified validation slice out of its k-1 training folds (the
    test fold is never touched during training) and computes AUC on the
    held-out fold. Seeds for folding, carving, and weight init all derive
    from cfg.seed, so the whole report is deterministic.
    """
    assignment = kfold(ds, k, seed=cfg.seed)
    labels = ds.labels()
    for fold in range(k):
        fold_labels = labels[assignment.test_indices(fold)]
        if np.unique(fold_labels).size < 2:
            raise ConfigError(
                f"fold {fold} holds a single class; use a different seed or a smaller k"
            )
    round_seeds = np.random.SeedSequence(cfg.seed).spawn(k)
    curves: list[RocCurve] = []
    for round_no in range(1, k + 1):
        test_fold = k - round_no  # round 1 tests the last fold, rotating downward
        rng = np.random.default_rng(round_seeds[round_no - 1])
        train_idx, val_idx = _stratified_val_carve(
            ds, assignment.train_indices(test_fold), 0.2, rng
        )
        net = network_mod.build_disordernet(
            seed=int(round_seeds[round_no - 1].generate_state(1)[0]),
            dropout_rate=cfg.dropout_rate,
        )
        training_mod.train(net, ds.subset(train_idx), ds.subset(val_idx), cfg)
        test = ds.subset(assignment.test_indices(test_fold))
        scores = network_mod.score_patches(net, test.images())
        scored = list(zip(scores.tolist(), [int(v) for v in test.labels()]))
        curves.append(roc(scored))
    aucs = tuple(c.auc for c in curves)
    report = CrossValReport(k=k, round_aucs=aucs, mean_auc=sum(aucs) / k)
    return report, curves


def cross_validate(ds: PatchDataset, k: int, cfg: TrainConfig) -> CrossValReport:
    """k rounds of train/test rotation; see :func:`cross_validate_detailed`."""
    report, _ = cross_validate_detailed(ds, k, cfg)
    return report


def export_crossval(rep: CrossValReport, path) -> None:
    with open(path, "w") as fh:
        json.dump({"k": rep.k, "round_aucs": list(rep.round_aucs), "mean_auc": rep.mean_auc}, fh, indent=2)
        fh.write("\n")


def load_crossval(path) -> CrossValReport:
    with open(path) as fh:
        payload = json.load(fh)
    for key in ("k", "round_aucs", "mean_auc"):
        if key not in payload:
            raise ConfigError(f"{path}: cross-validation report is missing {key!r}")
    return CrossValReport(
        k=int(payload["k"]),
        round_aucs=tuple(float(a) for a in payload["round_aucs"]),
        mean_auc=float(payload["mean_auc"]),
    )
