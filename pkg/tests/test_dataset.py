"""Metric tables, the split and the oversampler."""

import numpy as np
import pytest

from boxmeta.dataset import (
    MetricTable,
    extract_records,
    extract_table,
    smote,
    split_resample,
    table_from_records,
)
from boxmeta.errors import DataError, SchemaError
from boxmeta.geometry import BBox
from boxmeta.pipeline import CandidateBox, GroundTruthBox, SurvivorRecord


def _make_table(n, n_pos, seed=0, n_features=5):
    rng = np.random.default_rng(seed)
    iou_values = np.concatenate(
        [rng.uniform(0.5, 1.0, n_pos), rng.uniform(0.0, 0.49, n - n_pos)]
    )
    return MetricTable(
        feature_names=[f"f{i}" for i in range(n_features)],
        image_ids=[f"row_{i}" for i in range(n)],
        features=rng.normal(size=(n, n_features)),
        true_iou=iou_values,
        is_tp=iou_values >= 0.5,
        num_classes=1,
        dropout_enabled=False,
    )


def test_table_shape_validation():
    with pytest.raises(SchemaError):
        MetricTable(
            feature_names=["a", "b"],
            image_ids=["x"],
            features=np.zeros((1, 3)),
            true_iou=np.zeros(1),
            is_tp=np.zeros(1, dtype=bool),
            num_classes=1,
            dropout_enabled=False,
        )


def test_columns_selects_in_requested_order():
    table = _make_table(4, 2)
    sub = table.columns(["f3", "f0"])
    assert np.array_equal(sub[:, 0], table.features[:, 3])
    assert np.array_equal(sub[:, 1], table.features[:, 0])
    with pytest.raises(SchemaError):
        table.columns(["f0", "nope"])


def test_subset_keeps_row_alignment():
    table = _make_table(10, 5)
    sub = table.subset(np.array([7, 2]))
    assert sub.image_ids == ["row_7", "row_2"]
    assert np.array_equal(sub.features[0], table.features[7])
    assert sub.true_iou[1] == table.true_iou[2]


# ---------------------------------------------------------------------- split


def test_split_is_a_disjoint_half_partition():
    table = _make_table(100, 40)
    train, val = split_resample(table, seed=0)
    assert len(train) == 50
    assert len(val) == 50
    assert sorted(train.image_ids + val.image_ids) == sorted(table.image_ids)
    assert not set(train.image_ids) & set(val.image_ids)


def test_split_odd_row_goes_to_train():
    train, val = split_resample(_make_table(7, 3), seed=1)
    assert len(train) == 4
    assert len(val) == 3


def test_split_is_seeded():
    table = _make_table(60, 20)
    a_train, _ = split_resample(table, seed=5)
    b_train, _ = split_resample(table, seed=5)
    c_train, _ = split_resample(table, seed=6)
    assert a_train.image_ids == b_train.image_ids
    assert a_train.image_ids != c_train.image_ids


def test_split_needs_two_rows():
    with pytest.raises(DataError):
        split_resample(_make_table(1, 1), seed=0)


# ---------------------------------------------------------------------- smote


def test_smote_balances_exactly_and_keeps_originals_first():
    table = _make_table(30, 8, seed=2)
    before = table.features.copy()
    out = smote(table, k=5, seed=0)
    assert int(out.is_tp.sum()) == len(out) - int(out.is_tp.sum())
    assert len(out) == 44
    # originals come first, bit for bit, and are not flagged synthetic
    assert np.array_equal(out.features[:30], before)
    assert out.image_ids[:30] == table.image_ids
    assert not out.synthetic[:30].any()
    assert out.synthetic[30:].all()
    # the input table itself is untouched
    assert np.array_equal(table.features, before)
    assert len(table) == 30


def test_smote_rows_lie_between_two_minority_parents():
    table = _make_table(24, 6, seed=3)
    out = smote(table, k=3, seed=1)
    minority = table.features[table.is_tp]
    for row in out.features[24:]:
        between = False
        for a in range(len(minority)):
            for b in range(len(minority)):
                if a == b:
                    continue
                lo = np.minimum(minority[a], minority[b])
                hi = np.maximum(minority[a], minority[b])
                if ((row >= lo) & (row <= hi)).all():
                    between = True
                    break
            if between:
                break
        assert between


def test_smote_synthetic_labels_copy_a_minority_row():
    table = _make_table(20, 5, seed=4)
    out = smote(table, seed=2)
    minority_iou = set(table.true_iou[table.is_tp].tolist())
    assert out.is_tp[20:].all()
    assert all(v in minority_iou for v in out.true_iou[20:])


def test_smote_is_seeded():
    table = _make_table(30, 10, seed=5)
    a = smote(table, seed=7)
    b = smote(table, seed=7)
    c = smote(table, seed=8)
    assert np.array_equal(a.features, b.features)
    assert not np.array_equal(a.features, c.features)


def test_smote_clamps_k_to_minority_size():
    # 3 minority rows admit at most 2 neighbors; k=5 must still work
    out = smote(_make_table(20, 3, seed=6), k=5, seed=0)
    assert int(out.is_tp.sum()) == 17


def test_smote_oversamples_whichever_class_is_smaller():
    table = _make_table(20, 16, seed=9)  # FP is the minority here
    out = smote(table, seed=0)
    assert int(out.is_tp.sum()) == 16
    assert len(out) == 32
    assert not out.is_tp[20:].any()


def test_smote_balanced_input_is_returned_unchanged():
    table = _make_table(20, 10, seed=7)
    assert smote(table, seed=0) is table


def test_smote_error_cases():
    with pytest.raises(DataError):
        smote(_make_table(10, 0, seed=0))
    with pytest.raises(DataError):
        smote(_make_table(10, 10, seed=0))
    with pytest.raises(DataError):
        smote(_make_table(10, 1, seed=0))
    with pytest.raises(DataError):
        smote(_make_table(10, 3, seed=0), k=0)


# ----------------------------------------------------------------- extraction


def _cand(r0, r1, c0, c1, score, probs=(1.0,), anchor_id=0, run=0):
    return CandidateBox(
        box=BBox(r0, r1, c0, c1),
        score=score,
        probs=probs,
        anchor_id=anchor_id,
        dropout_run=run,
    )


def test_extract_table_end_to_end():
    candidates = {
        "img_a": [
            _cand(0, 10, 0, 10, 0.9, anchor_id=0),
            _cand(0, 10, 1, 11, 0.7, anchor_id=1),
            _cand(40, 50, 40, 50, 0.05, anchor_id=2),  # filtered out
        ],
        "img_b": [_cand(5, 15, 5, 15, 0.8, anchor_id=0)],
    }
    gts = {
        "img_a": [GroundTruthBox(box=BBox(0, 10, 0, 10), class_index=1)],
        "img_b": [],
    }
    table = extract_table(
        candidates, gts, threshold=0.1, tau=0.45, num_classes=1, dropout=False
    )
    assert table.image_ids == ["img_a", "img_b"]
    assert len(table.feature_names) == 47
    assert table.true_iou[0] == 1.0
    assert bool(table.is_tp[0]) is True
    assert table.true_iou[1] == 0.0
    names = table.feature_names
    assert table.features[0, names.index("n_candidates")] == 2.0
    assert table.features[1, names.index("n_candidates")] == 1.0


def test_extract_records_jobs_equivalence():
    rng = np.random.default_rng(12)
    candidates = {}
    for i in range(8):
        image = []
        for a in range(int(rng.integers(1, 12))):
            r = np.sort(rng.uniform(0, 60, 2))
            c = np.sort(rng.uniform(0, 60, 2))
            image.append(
                _cand(
                    float(r[0]), float(r[1]), float(c[0]), float(c[1]),
                    float(rng.uniform()), anchor_id=a,
                )
            )
        candidates[f"img_{i}"] = image
    serial = extract_records(candidates, 0.2, 0.45, jobs=1)
    parallel = extract_records(candidates, 0.2, 0.45, jobs=2)
    assert list(serial) == list(parallel)
    for image_id in serial:
        assert serial[image_id] == parallel[image_id]


def test_table_from_records_rejects_duplicate_survivor_anchor():
    rec = SurvivorRecord(survivor=_cand(0, 10, 0, 10, 0.9, anchor_id=1), image_id="img")
    with pytest.raises(SchemaError):
        table_from_records({"img": [rec, rec]}, {"img": []}, 1, False)


def test_empty_extraction_yields_empty_table():
    table = extract_table({}, {}, threshold=0.1, tau=0.45, num_classes=2, dropout=False)
    assert len(table) == 0
    assert table.features.shape == (0, 48)
