"""Confusion indicators, ROC/AUC against a pair-counting oracle, k-fold runner."""

import json

import numpy as np
import numpy.testing as npt
import pytest

from lesionscan import dataset, metrics, network, training
from lesionscan.errors import ConfigError
from lesionscan.metrics import (
    ConfusionCounts,
    CrossValReport,
    MetricReport,
    RocCurve,
    confusion,
    cross_validate,
    cross_validate_detailed,
    export_crossval,
    export_report,
    export_roc,
    load_crossval,
    load_report,
    load_roc,
    report,
    roc,
    round_half_up,
)
from lesionscan.training import TrainConfig


# Oracle: AUC as the Mann-Whitney pair statistic, P(s+ > s-) + 0.5 P(s+ = s-),
# counted over every positive/negative pair. The trapezoidal sweep in
# metrics.roc must agree with this independent computation exactly.
def mann_whitney_auc(scored):
    pos = [s for s, l in scored if l == 1]
    neg = [s for s, l in scored if l == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


# --- confusion ---


def test_confusion_basic_counts():
    scored = [(0.9, 1), (0.6, 1), (0.4, 1), (0.7, 0), (0.3, 0), (0.1, 0)]
    c = confusion(scored, threshold=0.5)
    assert (c.tp, c.fp, c.tn, c.fn) == (2, 1, 2, 1)
    assert c.total == 6


def test_confusion_threshold_is_inclusive():
    c = confusion([(0.5, 1), (0.5, 0)], threshold=0.5)
    assert (c.tp, c.fp, c.tn, c.fn) == (1, 1, 0, 0)


def test_confusion_degenerate_thresholds():
    scored = [(0.9, 1), (0.1, 0)]
    all_pos = confusion(scored, threshold=0.0)
    assert (all_pos.tn, all_pos.fn) == (0, 0)
    none_pos = confusion(scored, threshold=1.1)
    assert (none_pos.tp, none_pos.fp) == (0, 0)


def test_confusion_rejects_empty():
    with pytest.raises(ConfigError):
        confusion([])


def test_confusion_counts_reject_negatives():
    with pytest.raises(ConfigError):
        ConfusionCounts(tp=-1, fp=0, tn=0, fn=0)


# --- report ---


def test_report_reference_counts_high_specificity():
    # tp=118, fp=3, tn=139, fn=0
    rep = report(ConfusionCounts(tp=118, fp=3, tn=139, fn=0))
    assert rep.sensitivity == 1.0
    assert abs(rep.specificity - 139 / 142) < 1e-12  # 0.9789...
    assert abs(rep.precision - 118 / 121) < 1e-12  # 0.9752...
    assert abs(rep.accuracy - 257 / 260) < 1e-12  # 0.9885...
    assert rep.recall == rep.sensitivity
    assert abs(rep.f1 - 236 / 239) < 1e-12  # 0.9874...


def test_report_reference_counts_larger_set():
    # tp=234, fp=3, tn=298, fn=5
    rep = report(ConfusionCounts(tp=234, fp=3, tn=298, fn=5))
    assert abs(rep.sensitivity - 234 / 239) < 1e-12
    assert abs(rep.specificity - 298 / 301) < 1e-12
    assert abs(rep.precision - 234 / 237) < 1e-12
    assert abs(rep.accuracy - 532 / 540) < 1e-12


def test_report_zero_denominators_are_none():
    rep = report(ConfusionCounts(tp=0, fp=0, tn=5, fn=0))
    assert rep.sensitivity is None  # no positives in truth
    assert rep.precision is None  # no positive predictions
    assert rep.f1 is None
    assert rep.specificity == 1.0
    assert rep.accuracy == 1.0


def test_report_f1_none_when_both_rates_zero():
    rep = report(ConfusionCounts(tp=0, fp=2, tn=0, fn=3))
    assert rep.sensitivity == 0.0 and rep.precision == 0.0
    assert rep.f1 is None  # 0/0 inside the harmonic mean


def test_report_rejects_all_zero_counts():
    with pytest.raises(ConfigError, match="all zero"):
        report(ConfusionCounts(0, 0, 0, 0))


# --- rounding ---


@pytest.mark.parametrize(
    "value, decimals, want",
    [
        (0.985, 2, 0.99),
        (0.984999, 2, 0.98),
        (0.125, 2, 0.13),
        (0.982, 2, 0.98),
        (2.5, 0, 3.0),
        (-0.125, 2, -0.13),
    ],
)
def test_round_half_up(value, decimals, want):
    assert round_half_up(value, decimals) == want


def test_round_half_up_mean_auc_display():
    aucs = [0.99, 0.98, 1.0, 0.96, 0.98]
    mean = sum(aucs) / len(aucs)
    assert abs(mean - 0.982) < 1e-12
    assert round_half_up(mean) == 0.98


# --- roc ---


def test_roc_known_interleaved_case():
    scored = [(0.8, 1), (0.4, 1), (0.6, 0), (0.2, 0)]
    curve = roc(scored)
    assert curve.auc == 0.75
    assert curve.points[0] == (0.0, 0.0)
    assert curve.points[-1] == (1.0, 1.0)


def test_roc_perfect_separation():
    curve = roc([(0.9, 1), (0.8, 1), (0.2, 0), (0.1, 0)])
    assert curve.auc == 1.0
    assert curve.points == ((0.0, 0.0), (0.0, 0.5), (0.0, 1.0), (0.5, 1.0), (1.0, 1.0))


def test_roc_anti_separation():
    assert roc([(0.1, 1), (0.2, 1), (0.8, 0), (0.9, 0)]).auc == 0.0


def test_roc_all_scores_tied():
    curve = roc([(0.5, 1), (0.5, 0), (0.5, 1), (0.5, 0)])
    assert curve.points == ((0.0, 0.0), (1.0, 1.0))
    assert curve.auc == 0.5


def test_roc_rejects_single_class_and_empty():
    with pytest.raises(ConfigError, match="single-class"):
        roc([(0.5, 1), (0.6, 1)])
    with pytest.raises(ConfigError, match="no scores"):
        roc([])


def test_roc_matches_pair_counting_oracle():
    rng = np.random.default_rng(17)
    for _ in range(200):
        n = int(rng.integers(2, 40))
        # a coarse score grid forces plenty of exact ties
        scores = rng.integers(0, 7, n) / 6.0
        labels = rng.integers(0, 2, n)
        if len(set(labels.tolist())) < 2:
            continue
        scored = list(zip(scores.tolist(), labels.tolist()))
        assert abs(roc(scored).auc - mann_whitney_auc(scored)) < 1e-12


def test_roc_invariant_under_monotone_transform():
    rng = np.random.default_rng(23)
    scores = rng.uniform(0, 1, 30)
    labels = rng.integers(0, 2, 30)
    labels[0], labels[1] = 0, 1
    base = roc(list(zip(scores.tolist(), labels.tolist())))
    cubed = roc(list(zip((scores**3).tolist(), labels.tolist())))
    assert base.points == cubed.points
    assert base.auc == cubed.auc


def test_confusion_point_lies_on_roc_curve():
    rng = np.random.default_rng(31)
    scores = (rng.integers(0, 10, 50) / 9.0).tolist()
    labels = rng.integers(0, 2, 50)
    labels[0], labels[1] = 0, 1
    scored = list(zip(scores, labels.tolist()))
    curve = roc(scored)
    n_pos = sum(1 for _, l in scored if l == 1)
    n_neg = len(scored) - n_pos
    for t in sorted(set(scores)):
        c = confusion(scored, threshold=t)
        point = (c.fp / n_neg, c.tp / n_pos)
        assert any(
            abs(point[0] - x) < 1e-12 and abs(point[1] - y) < 1e-12 for x, y in curve.points
        )


def test_roc_points_are_monotone():
    rng = np.random.default_rng(37)
    scored = list(zip(rng.uniform(0, 1, 60).tolist(), ([0, 1] * 30)))
    curve = roc(scored)
    xs = [x for x, _ in curve.points]
    ys = [y for _, y in curve.points]
    assert xs == sorted(xs) and ys == sorted(ys)


# --- serialization ---


def test_roc_export_roundtrip_is_exact(tmp_path):
    scored = [(0.8, 1), (0.4, 1), (0.6, 0), (0.2, 0)]
    curve = roc(scored)
    path = tmp_path / "roc.csv"
    export_roc(curve, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "fpr,tpr"
    assert lines[-1] == f"# auc={curve.auc!r}"
    loaded = load_roc(path)
    assert loaded == curve


def test_load_roc_error_cases(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n0,0\n# auc=1\n")
    with pytest.raises(ConfigError, match="header"):
        load_roc(path)
    path.write_text("fpr,tpr\n0.0,0.0\n1.0,1.0\n")
    with pytest.raises(ConfigError, match="auc"):
        load_roc(path)


def test_report_export_roundtrip_with_nulls(tmp_path):
    rep = report(ConfusionCounts(tp=0, fp=0, tn=5, fn=0))
    path = tmp_path / "report.json"
    export_report(rep, path, counts=ConfusionCounts(tp=0, fp=0, tn=5, fn=0))
    payload = json.loads(path.read_text())
    assert payload["sensitivity"] is None  # undefined values serialize as null
    assert payload["counts"] == {"tp": 0, "fp": 0, "tn": 5, "fn": 0}
    assert load_report(path) == rep


def test_load_report_missing_key(tmp_path):
    path = tmp_path / "partial.json"
    path.write_text('{"sensitivity": 1.0}')
    with pytest.raises(ConfigError, match="missing"):
        load_report(path)


def test_crossval_export_roundtrip(tmp_path):
    rep = CrossValReport(k=3, round_aucs=(0.9, 0.95, 1.0), mean_auc=0.95)
    path = tmp_path / "cv.json"
    export_crossval(rep, path)
    payload = json.loads(path.read_text())
    assert set(payload) == {"k", "round_aucs", "mean_auc"}
    assert load_crossval(path) == rep


def test_load_crossval_missing_key(tmp_path):
    path = tmp_path / "cv.json"
    path.write_text('{"k": 2, "round_aucs": [0.5, 0.5]}')
    with pytest.raises(ConfigError, match="missing"):
        load_crossval(path)


def test_crossval_report_length_checked():
    with pytest.raises(ConfigError):
        CrossValReport(k=3, round_aucs=(1.0,), mean_auc=1.0)


# --- cross-validation runner ---


def test_cross_validate_minimal_two_fold():
    # 4 samples, 2 per class: each round trains on one sample per class
    ds = dataset.synth_patches(4, 0.5, seed=1)
    rep = cross_validate(ds, 2, TrainConfig(epochs=1, batch_size=2, seed=0))
    assert rep.k == 2
    assert len(rep.round_aucs) == 2
    assert all(0.0 <= a <= 1.0 for a in rep.round_aucs)
    assert abs(rep.mean_auc - sum(rep.round_aucs) / 2) < 1e-12


def test_cross_validate_rounds_rotate_from_last_fold(monkeypatch):
    """Round r must score exactly the members of fold k-r, nothing else."""
    ds = dataset.synth_patches(10, 0.5, seed=3)
    k = 5
    cfg = TrainConfig(epochs=1, batch_size=2, seed=11)
    folds = dataset.kfold(ds, k, seed=cfg.seed)
    # fingerprint each sample by its pixel sum (distinct for synthetic patches)
    prints = {round(float(s.pixels.sum()), 6): i for i, s in enumerate(ds.samples)}
    assert len(prints) == len(ds)

    seen: list[list[int]] = []
    trained_on: list[set[int]] = []

    def fake_train(net, train_set, val_set, cfg_):
        ids = {prints[round(float(p.sum()), 6)] for p in train_set.images()}
        ids |= {prints[round(float(p.sum()), 6)] for p in val_set.images()}
        trained_on.append(ids)
        return training.TrainHistory()

    def fake_score(net, patches, chunk_size=256):
        idx = [prints[round(float(p.sum()), 6)] for p in patches]
        seen.append(idx)
        # alternate scores so every round still yields a two-class ROC
        return np.linspace(0.1, 0.9, len(idx))

    monkeypatch.setattr(training, "train", fake_train)
    monkeypatch.setattr(network, "score_patches", fake_score)
    rep, curves = cross_validate_detailed(ds, k, cfg)

    assert len(seen) == k
    for round_no, scored_idx in enumerate(seen, start=1):
        expected = set(folds.test_indices(k - round_no).tolist())
        assert set(scored_idx) == expected
        # the scored fold is never part of that round's training material
        assert trained_on[round_no - 1].isdisjoint(expected)
        assert trained_on[round_no - 1] | expected == set(range(len(ds)))


def test_cross_validate_deterministic():
    ds = dataset.synth_patches(8, 0.5, seed=2)
    cfg = TrainConfig(epochs=1, batch_size=4, seed=5)
    a = cross_validate(ds, 2, cfg)
    b = cross_validate(ds, 2, cfg)
    assert a == b


def test_cross_validate_detailed_returns_one_curve_per_round():
    ds = dataset.synth_patches(8, 0.5, seed=2)
    rep, curves = cross_validate_detailed(ds, 2, TrainConfig(epochs=1, batch_size=4, seed=5))
    assert len(curves) == 2
    assert rep.round_aucs == tuple(c.auc for c in curves)
    for c in curves:
        assert isinstance(c, RocCurve)


def test_metric_report_to_dict_keys():
    rep = MetricReport(1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    assert list(rep.to_dict()) == [
        "sensitivity",
        "specificity",
        "precision",
        "accuracy",
        "recall",
        "f1",
    ]
