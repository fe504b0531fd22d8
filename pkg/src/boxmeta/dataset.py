"""Metric tables: assembly from survivor records, resampling, SMOTE.

A MetricTable is the tabular dataset the meta models consume: one row per
NMS survivor, columns in the canonical feature order, plus the IoU label.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, SchemaError
from .features import build_row, feature_names
from .pipeline import (
    CandidateBox,
    GroundTruthBox,
    SurvivorRecord,
    attach_dropout,
    nms,
    score_filter,
)

DEFAULT_SMOTE_K = 5


@dataclass
class MetricTable:
    """Rows of per-survivor metrics with labels.

    synthetic marks SMOTE rows; they may train models but must never reach a
    validation metric.
    """

    feature_names: list[str]
    image_ids: list[str]
    features: np.ndarray
    true_iou: np.ndarray
    is_tp: np.ndarray
    num_classes: int
    dropout_enabled: bool
    synthetic: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        n = len(self.image_ids)
        if self.synthetic is None:
            self.synthetic = np.zeros(n, dtype=bool)
        if self.features.shape != (n, len(self.feature_names)):
            raise SchemaError(
                f"feature matrix shape {self.features.shape} does not match "
                f"{n} rows x {len(self.feature_names)} columns"
            )
        if self.true_iou.shape != (n,) or self.is_tp.shape != (n,) or self.synthetic.shape != (n,):
            raise SchemaError("label arrays must have one entry per row")

    def __len__(self) -> int:
        return len(self.image_ids)

    def subset(self, indices: np.ndarray) -> "MetricTable":
        return MetricTable(
            feature_names=self.feature_names,
            image_ids=[self.image_ids[i] for i in indices],
            features=self.features[indices],
            true_iou=self.true_iou[indices],
            is_tp=self.is_tp[indices],
            num_classes=self.num_classes,
            dropout_enabled=self.dropout_enabled,
            synthetic=self.synthetic[indices],
        )

    def columns(self, names: list[str]) -> np.ndarray:
        """Feature sub-matrix in the order of names; unknown name is an error."""
        index = {name: i for i, name in enumerate(self.feature_names)}
        missing = [name for name in names if name not in index]
        if missing:
            raise SchemaError(f"unknown feature columns: {', '.join(missing)}")
        return self.features[:, [index[name] for name in names]]


def _extract_one_image(
    args: tuple[str, list[CandidateBox], float, float],
) -> tuple[str, list[SurvivorRecord]]:
    image_id, candidates, threshold, tau = args
    base = [c for c in candidates if c.dropout_run == 0]
    filtered = score_filter(base, threshold)
    records = nms(filtered, tau, image_id=image_id)
    return image_id, attach_dropout(records, candidates)


def extract_records(
    candidates_by_image: dict[str, list[CandidateBox]],
    threshold: float,
    tau: float,
    jobs: int = 1,
) -> dict[str, list[SurvivorRecord]]:
    """Run score filter, NMS and dropout joining for every image.

    Images are independent; with jobs > 1 they are processed in a process
    pool and merged back in input order, so the result is identical either
    way.
    """
    work = [
        (image_id, candidates, threshold, tau)
        for image_id, candidates in candidates_by_image.items()
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_extract_one_image, work))
    else:
        results = [_extract_one_image(item) for item in work]
    return dict(results)


def table_from_records(
    records_by_image: dict[str, list[SurvivorRecord]],
    gts_by_image: dict[str, list[GroundTruthBox]],
    num_classes: int,
    dropout: bool,
) -> MetricTable:
    """Assemble survivor records into a metric table, image order preserved."""
    names = feature_names(num_classes, dropout)
    image_ids: list[str] = []
    rows: list[np.ndarray] = []
    true_iou: list[float] = []
    is_tp: list[bool] = []
    for image_id, records in records_by_image.items():
        seen_anchors: set[int] = set()
        gts = gts_by_image.get(image_id, [])
        for rec in records:
            anchor = rec.survivor.anchor_id
            if anchor in seen_anchors:
                raise SchemaError(
                    f"duplicate survivor anchor {anchor} in image {image_id!r}"
                )
            seen_anchors.add(anchor)
            row = build_row(rec, gts, num_classes, dropout)
            image_ids.append(row.image_id)
            rows.append(row.values)
            true_iou.append(row.true_iou)
            is_tp.append(row.is_tp)
    features = (
        np.vstack(rows) if rows else np.empty((0, len(names)), dtype=float)
    )
    return MetricTable(
        feature_names=names,
        image_ids=image_ids,
        features=features,
        true_iou=np.asarray(true_iou, dtype=float),
        is_tp=np.asarray(is_tp, dtype=bool),
        num_classes=num_classes,
        dropout_enabled=dropout,
    )


def extract_table(
    candidates_by_image: dict[str, list[CandidateBox]],
    gts_by_image: dict[str, list[GroundTruthBox]],
    *,
    threshold: float,
    tau: float,
    num_classes: int,
    dropout: bool,
) -> MetricTable:
    """Full extraction: dump plus ground truth to labeled metric table."""
    records = extract_records(candidates_by_image, threshold, tau)
    return table_from_records(records, gts_by_image, num_classes, dropout)


def split_resample(table: MetricTable, seed: int) -> tuple[MetricTable, MetricTable]:
    """Seeded uniform permutation split into equal train/validation halves.

    An odd row goes to train. Fewer than 2 rows cannot be split.
    """
    n = len(table)
    if n < 2:
        raise DataError(f"cannot split a table with {n} row(s)")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = (n + 1) // 2
    return table.subset(perm[:n_train]), table.subset(perm[n_train:])


def smote(table: MetricTable, k: int = DEFAULT_SMOTE_K, seed: int = 0) -> MetricTable:
    """Oversample the minority TP class to exact balance.

    Synthetic rows interpolate a random minority row x toward one of its k
    nearest minority neighbors z (Euclidean distance on z-score standardized
    features): x + u * (z - x) with u ~ U[0, 1] in raw feature space. k is
    clamped to minority size - 1. Original rows are kept untouched and first;
    synthetic rows copy x's label fields and are flagged synthetic.
    """
    if k < 1:
        raise DataError(f"smote requires k >= 1, got {k}")
    labels = table.is_tp
    n_pos = int(labels.sum())
    n_neg = len(table) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("smote requires both classes present")
    if n_pos == n_neg:
        return table
    minority_label = n_pos < n_neg
    minority_idx = np.flatnonzero(labels == minority_label)
    if len(minority_idx) < 2:
        raise DataError(
            f"smote requires at least 2 minority rows, got {len(minority_idx)}"
        )
    n_needed = abs(n_pos - n_neg)
    k_eff = min(k, len(minority_idx) - 1)

    mean = table.features.mean(axis=0)
    std = table.features.std(axis=0)
    std[std < 1e-12] = 1.0
    standardized = (table.features[minority_idx] - mean) / std
    # pairwise distances among minority rows; argsort is stable, so distance
    # ties resolve by minority row order
    diff = standardized[:, None, :] - standardized[None, :, :]
    distances = np.sqrt((diff * diff).sum(axis=2))
    np.fill_diagonal(distances, np.inf)
    neighbor_order = np.argsort(distances, axis=1, kind="stable")[:, :k_eff]

    rng = np.random.default_rng(seed)
    raw_minority = table.features[minority_idx]
    new_rows: list[np.ndarray] = []
    new_ids: list[str] = []
    new_iou: list[float] = []
    for _ in range(n_needed):
        i = int(rng.integers(len(minority_idx)))
        j = int(neighbor_order[i, int(rng.integers(k_eff))])
        u = float(rng.uniform())
        x = raw_minority[i]
        z = raw_minority[j]
        row = x + u * (z - x)
        # exact-arithmetic no-op; keeps the row componentwise between parents
        # under floating point
        row = np.clip(row, np.minimum(x, z), np.maximum(x, z))
        new_rows.append(row)
        new_ids.append(table.image_ids[minority_idx[i]])
        new_iou.append(float(table.true_iou[minority_idx[i]]))

    return MetricTable(
        feature_names=table.feature_names,
        image_ids=table.image_ids + new_ids,
        features=np.vstack([table.features, np.vstack(new_rows)]),
        true_iou=np.concatenate([table.true_iou, np.asarray(new_iou)]),
        is_tp=np.concatenate(
            [table.is_tp, np.full(n_needed, minority_label, dtype=bool)]
        ),
        num_classes=table.num_classes,
        dropout_enabled=table.dropout_enabled,
        synthetic=np.concatenate(
            [table.synthetic, np.ones(n_needed, dtype=bool)]
        ),
    )
