"""Scalar metrics against definitional arithmetic and small frozen cases."""

import math

import numpy as np
import pytest

from boxmeta.dataset import MetricTable
from boxmeta.errors import ConfigError, DataError
from boxmeta.evaluation import (
    accuracy,
    auroc,
    average_precision,
    detection_map,
    feature_correlations,
    mean_average_precision,
    pearson,
    pearson_flagged,
    r2,
    residual_std,
    sweep,
)
from boxmeta.geometry import BBox
from boxmeta.pipeline import CandidateBox, GroundTruthBox
from boxmeta.synthgen import SceneConfig, generate

# ------------------------------------------------------------------- pearson


def test_pearson_fixed_value():
    # sums: dx.dy = 3, dx.dx = 2, dy.dy = 14/3
    got = pearson(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 4.0]))
    assert got == pytest.approx(3.0 / math.sqrt(2.0 * 14.0 / 3.0), abs=1e-15)
    assert got == pytest.approx(0.9819805060619657, abs=1e-12)


def test_pearson_is_plus_minus_one_on_exact_lines():
    x = np.linspace(0, 1, 20)
    assert pearson(x, 3.0 * x + 1.0) == pytest.approx(1.0, abs=1e-12)
    assert pearson(x, -0.5 * x) == pytest.approx(-1.0, abs=1e-12)


def test_pearson_matches_definitional_sums():
    rng = np.random.default_rng(19)
    for _ in range(50):
        n = int(rng.integers(3, 200))
        x = rng.normal(size=n)
        y = rng.normal(size=n)
        num = ((x - x.mean()) * (y - y.mean())).sum()
        den = math.sqrt(((x - x.mean()) ** 2).sum() * ((y - y.mean()) ** 2).sum())
        assert abs(pearson(x, y) - num / den) < 1e-12


def test_pearson_degenerate_inputs_flagged():
    assert pearson_flagged(np.full(5, 2.0), np.arange(5.0)) == (0.0, True)
    assert pearson_flagged(np.arange(5.0), np.full(5, 1.0)) == (0.0, True)
    r, degenerate = pearson_flagged(np.arange(5.0), np.arange(5.0))
    assert not degenerate and r == pytest.approx(1.0)
    with pytest.raises(DataError):
        pearson(np.array([]), np.array([]))
    with pytest.raises(DataError):
        pearson(np.arange(3.0), np.arange(4.0))


# ------------------------------------------------------------ r2 and friends


def test_r2_fixed_value():
    got = r2(np.array([0.0, 0.5, 1.0]), np.array([0.1, 0.5, 0.9]))
    assert got == pytest.approx(0.96, abs=1e-12)


def test_r2_matches_definitional_sums():
    rng = np.random.default_rng(20)
    for _ in range(50):
        n = int(rng.integers(3, 200))
        y = rng.uniform(0, 1, n)
        pred = y + rng.normal(0, 0.1, n)
        expected = 1.0 - ((y - pred) ** 2).sum() / ((y - y.mean()) ** 2).sum()
        assert abs(r2(y, pred) - expected) < 1e-12


def test_r2_perfect_and_constant():
    y = np.array([0.2, 0.4, 0.9])
    assert r2(y, y) == 1.0
    with pytest.raises(DataError):
        r2(np.full(4, 0.3), np.arange(4.0))


def test_residual_std_is_population_std():
    got = residual_std(np.array([0.0, 1.0]), np.array([0.5, 0.5]))
    assert got == 0.5
    rng = np.random.default_rng(21)
    y = rng.uniform(size=30)
    p = rng.uniform(size=30)
    assert residual_std(y, p) == pytest.approx(float(np.std(y - p)), abs=1e-15)


def test_accuracy_fixed_value_and_inclusive_threshold():
    got = accuracy(np.array([1, 0, 1, 0]), np.array([0.9, 0.8, 0.4, 0.1]))
    assert got == 0.5
    # probability exactly 0.5 decides positive
    assert accuracy(np.array([1]), np.array([0.5])) == 1.0
    assert accuracy(np.array([0]), np.array([0.5])) == 0.0


# --------------------------------------------------------------------- auroc


def _pairwise_auroc(labels, scores):
    """O(n^2) reference: P(score_pos > score_neg) + half the ties."""
    pos = scores[labels.astype(bool)]
    neg = scores[~labels.astype(bool)]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def test_auroc_fixed_value():
    assert auroc(np.array([1, 1, 0, 0]), np.array([0.9, 0.4, 0.6, 0.1])) == 0.75


def test_auroc_perfect_and_inverted():
    labels = np.array([0, 0, 1, 1])
    assert auroc(labels, np.array([0.1, 0.2, 0.8, 0.9])) == 1.0
    assert auroc(labels, np.array([0.9, 0.8, 0.2, 0.1])) == 0.0


def test_auroc_all_tied_scores_is_half():
    assert auroc(np.array([1, 0, 1, 0]), np.full(4, 0.7)) == 0.5


def test_auroc_matches_pairwise_reference():
    rng = np.random.default_rng(22)
    for trial in range(40):
        n = int(rng.integers(4, 120))
        labels = (rng.uniform(size=n) < 0.4).astype(float)
        if labels.sum() in (0, n):
            labels[0] = 1.0 - labels[0]
        scores = rng.uniform(size=n)
        if trial % 2 == 0:
            scores = np.round(scores, 1)  # heavy ties
        assert auroc(labels, scores) == pytest.approx(
            _pairwise_auroc(labels, scores), abs=1e-10
        )


def test_auroc_is_invariant_under_monotone_transform():
    rng = np.random.default_rng(23)
    labels = (rng.uniform(size=60) < 0.5).astype(float)
    labels[0], labels[1] = 1.0, 0.0
    scores = rng.uniform(size=60)
    assert auroc(labels, scores) == auroc(labels, scores**3)


def test_auroc_requires_both_classes():
    with pytest.raises(DataError):
        auroc(np.ones(4), np.arange(4.0))


# ------------------------------------------------------------------------ AP


def _box(r0=0.0, r1=10.0, c0=0.0, c1=10.0):
    return BBox(r0, r1, c0, c1)


def test_ap_perfect_detection_is_one():
    gts = [("a", _box()), ("b", _box(20, 30, 20, 30))]
    preds = [("a", _box(), 0.9), ("b", _box(20, 30, 20, 30), 0.8)]
    assert average_precision(preds, gts) == 1.0


def test_ap_disjoint_detection_is_zero():
    gts = [("a", _box())]
    preds = [("a", _box(50, 60, 50, 60), 0.9)]
    assert average_precision(preds, gts) == 0.0


def test_ap_half_recall_is_half():
    # one of two objects found with full precision
    gts = [("a", _box()), ("a", _box(20, 30, 20, 30))]
    preds = [("a", _box(), 0.9)]
    assert average_precision(preds, gts) == 0.5


def test_ap_duplicate_detections_match_one_to_one():
    gts = [("a", _box()), ("a", _box(20, 30, 20, 30))]
    preds = [
        ("a", _box(), 0.9),
        ("a", _box(), 0.8),  # duplicate: ground truth already consumed
        ("a", _box(20, 30, 20, 30), 0.7),
    ]
    assert average_precision(preds, gts) == pytest.approx(5.0 / 6.0, abs=1e-12)


def test_ap_no_predictions_is_zero_and_no_gt_is_an_error():
    gts = [("a", _box())]
    assert average_precision([], gts) == 0.0
    with pytest.raises(DataError):
        average_precision([("a", _box(), 0.9)], [])


def test_ap_matches_are_per_image():
    gts = [("a", _box())]
    preds = [("b", _box(), 0.9)]  # same geometry, wrong image
    assert average_precision(preds, gts) == 0.0


def test_map_skips_classes_without_ground_truth():
    preds = {1: [("a", _box(), 0.9)], 2: [("a", _box(20, 30, 20, 30), 0.8)]}
    gts = {1: [("a", _box())], 2: []}
    value, skipped = mean_average_precision(preds, gts)
    assert value == 1.0
    assert skipped == [2]
    with pytest.raises(DataError):
        mean_average_precision(preds, {1: [], 2: []})


def test_detection_map_end_to_end():
    from boxmeta.pipeline import SurvivorRecord

    survivor = CandidateBox(box=_box(), score=0.9, probs=(1.0,), anchor_id=0)
    records = {"a": [SurvivorRecord(survivor=survivor, image_id="a")]}
    gts = {"a": [GroundTruthBox(box=_box(), class_index=1)]}
    value, skipped = detection_map(records, gts)
    assert value == 1.0
    assert skipped == []


# ------------------------------------------------------------- correlations


def test_feature_correlations_rank_by_abs_r():
    rng = np.random.default_rng(24)
    n = 60
    true_iou = rng.uniform(0, 1, n)
    features = np.column_stack(
        [
            rng.normal(size=n),  # noise
            true_iou,  # exact copy: r = 1
            np.full(n, 3.0),  # constant: degenerate
            -true_iou + rng.normal(0, 0.05, n),  # strong negative
        ]
    )
    table = MetricTable(
        feature_names=["noise", "copy", "flat", "anti"],
        image_ids=[f"i{k}" for k in range(n)],
        features=features,
        true_iou=true_iou,
        is_tp=true_iou >= 0.5,
        num_classes=1,
        dropout_enabled=False,
    )
    rows = feature_correlations(table)
    names = [row[0] for row in rows]
    assert names[0] == "copy"
    assert names[1] == "anti"
    assert names[-1] == "flat"
    by_name = {row[0]: row for row in rows}
    assert by_name["copy"][2] == pytest.approx(1.0, abs=1e-12)
    assert by_name["anti"][2] < -0.9
    assert by_name["flat"][2] == 0.0
    assert by_name["flat"][4] is True
    abs_rs = [row[3] for row in rows]
    assert abs_rs == sorted(abs_rs, reverse=True)


# --------------------------------------------------------------------- sweep


def _tiny_scene():
    config = SceneConfig(num_images=30, seed=42)
    return generate(config)


def test_sweep_smoke():
    gts, candidates = _tiny_scene()
    report = sweep(
        candidates,
        gts,
        schedule=[0.1],
        num_classes=3,
        families=("lr",),
        feature_sets=("baseline",),
        runs=3,
        base_seed=0,
    )
    assert report.runs == 3
    cell = report.cell(0.1, "lr", "baseline", "auroc")
    assert len(cell.values) == 3
    assert cell.mean == pytest.approx(float(np.mean(cell.values)))
    assert cell.std == pytest.approx(float(np.std(cell.values)))
    assert [t for t, _ in report.detector_map] == [0.1]
    with pytest.raises(KeyError):
        report.cell(0.5, "lr", "baseline", "auroc")


def test_sweep_skips_thresholds_with_too_few_rows():
    # two images keep one survivor each above 0.5: too few rows to split
    candidates = {
        "a": [
            CandidateBox(box=_box(), score=0.9, probs=(1.0,), anchor_id=0),
            CandidateBox(box=_box(60, 70, 60, 70), score=0.3, probs=(1.0,), anchor_id=1),
        ],
        "b": [
            CandidateBox(box=_box(), score=0.8, probs=(1.0,), anchor_id=0),
        ],
    }
    gts = {
        "a": [GroundTruthBox(box=_box(), class_index=1)],
        "b": [GroundTruthBox(box=_box(), class_index=1)],
    }
    report = sweep(
        candidates,
        gts,
        schedule=[0.5],
        num_classes=1,
        families=("lr",),
        feature_sets=("baseline",),
        runs=2,
    )
    assert report.cells == []
    assert any("skipped" in w for w in report.warnings)
    assert report.detector_map == [(0.5, 1.0)]


def test_sweep_parallel_matches_serial():
    gts, candidates = _tiny_scene()
    kwargs = dict(
        schedule=[0.1, 0.3],
        num_classes=3,
        families=("lr",),
        feature_sets=("baseline", "metadetect"),
        runs=2,
        base_seed=1,
    )
    serial = sweep(candidates, gts, **kwargs, jobs=1)
    parallel = sweep(candidates, gts, **kwargs, jobs=2)
    assert len(serial.cells) == len(parallel.cells)
    for a, b in zip(serial.cells, parallel.cells):
        assert (a.threshold, a.family, a.feature_set, a.metric) == (
            b.threshold,
            b.family,
            b.feature_set,
            b.metric,
        )
        assert a.values == b.values
    assert serial.detector_map == parallel.detector_map
    assert serial.warnings == parallel.warnings


def test_sweep_collects_regression_scatter():
    gts, candidates = _tiny_scene()
    report = sweep(
        candidates,
        gts,
        schedule=[0.1],
        num_classes=3,
        families=("lr",),
        feature_sets=("baseline",),
        tasks=("regression",),
        runs=1,
        collect_scatter=True,
    )
    (key, (true_iou, predicted)), = report.scatter.items()
    assert key == (0.1, "lr", "baseline")
    assert true_iou.shape == predicted.shape
    assert len(true_iou) > 0
    assert np.all((predicted >= 0.0) & (predicted <= 1.0))


def test_sweep_validates_inputs():
    gts, candidates = _tiny_scene()
    with pytest.raises(ConfigError):
        sweep(candidates, gts, schedule=[0.1], num_classes=3, runs=0)
    with pytest.raises(ConfigError):
        sweep(candidates, gts, schedule=[0.1], num_classes=3, feature_sets=("everything",))
