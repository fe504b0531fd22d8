"""Metrics and the threshold-sweep benchmark.

Scalar metrics: Pearson correlation, R2, residual spread, accuracy at the
0.5 operating point, AUROC via midranks, and Pascal-style AP@.5 / mAP for
raw detections. The sweep re-extracts metric tables across a score-threshold
schedule, repeats a seeded resample protocol per threshold, and aggregates
validation metrics per (threshold, family, feature set).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import (
    DEFAULT_SMOTE_K,
    MetricTable,
    extract_records,
    smote,
    split_resample,
    table_from_records,
)
from .errors import ConfigError, DataError
from .features import feature_set_columns
from .geometry import BBox, iou
from .models import make_model
from .pipeline import DEFAULT_TAU, CandidateBox, GroundTruthBox, SurvivorRecord

DECISION_THRESHOLD = 0.5
CLASSIFICATION_METRICS = ("accuracy", "auroc")
REGRESSION_METRICS = ("r2", "residual_std")
FEATURE_SETS = ("baseline", "metadetect", "metadetect-dropout")


def pearson_flagged(x: np.ndarray, y: np.ndarray) -> tuple[float, bool]:
    """Sample Pearson correlation; a constant input is degenerate and yields 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError(f"pearson expects equal-length vectors, got {x.shape} and {y.shape}")
    if len(x) == 0:
        raise DataError("pearson of empty vectors")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        return 0.0, True
    dx = x - x.mean()
    dy = y - y.mean()
    return float((dx * dy).sum() / np.sqrt((dx * dx).sum() * (dy * dy).sum())), False


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    return pearson_flagged(x, y)[0]


def r2(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Coefficient of determination 1 - SS_res / SS_tot."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or len(y_true) == 0:
        raise DataError("r2 expects equal-length non-empty vectors")
    if np.ptp(y_true) == 0.0:
        raise DataError("r2 is undefined for a constant target")
    ss_res = float(((y_true - y_pred) ** 2).sum())
    ss_tot = float(((y_true - y_true.mean()) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def residual_std(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Population standard deviation of the residuals."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or len(y_true) == 0:
        raise DataError("residual_std expects equal-length non-empty vectors")
    return float(np.std(y_true - y_pred))


def accuracy(labels: np.ndarray, probs: np.ndarray, threshold: float = DECISION_THRESHOLD) -> float:
    """Fraction of correct decisions at prob >= threshold (inclusive)."""
    labels = np.asarray(labels, dtype=bool)
    probs = np.asarray(probs, dtype=float)
    if labels.shape != probs.shape or len(labels) == 0:
        raise DataError("accuracy expects equal-length non-empty vectors")
    return float(((probs >= threshold) == labels).mean())


def _midranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing the average rank of their run."""
    order = np.argsort(values, kind="stable")
    sorted_values = values[order]
    ranks = np.empty(len(values))
    i = 0
    n = len(values)
    while i < n:
        j = i
        while j + 1 < n and sorted_values[j + 1] == sorted_values[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(labels: np.ndarray, probs: np.ndarray) -> float:
    """Mann-Whitney AUROC from midranks; ties count half."""
    labels = np.asarray(labels, dtype=bool)
    probs = np.asarray(probs, dtype=float)
    if labels.shape != probs.shape or len(labels) == 0:
        raise DataError("auroc expects equal-length non-empty vectors")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("auroc requires both classes present")
    ranks = _midranks(probs)
    rank_sum = float(ranks[labels].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def average_precision(
    predictions: list[tuple[str, BBox, float]],
    ground_truths: list[tuple[str, BBox]],
    iou_threshold: float = 0.5,
) -> float:
    """All-point-interpolated AP for one class.

    Predictions are matched greedily in descending score order (ties by
    input order) to the unmatched same-image ground truth with the highest
    IoU; a match requires IoU >= iou_threshold and each ground truth is
    consumed by at most one prediction.
    """
    if not ground_truths:
        raise DataError("average precision is undefined without ground truth")
    if not predictions:
        return 0.0
    gt_boxes: dict[str, list[BBox]] = {}
    for image_id, box in ground_truths:
        gt_boxes.setdefault(image_id, []).append(box)
    matched = {image_id: [False] * len(boxes) for image_id, boxes in gt_boxes.items()}

    order = sorted(range(len(predictions)), key=lambda i: (-predictions[i][2], i))
    tp = np.zeros(len(order))
    for rank, i in enumerate(order):
        image_id, box, _ = predictions[i]
        best_iou = 0.0
        best_j = -1
        for j, gt_box in enumerate(gt_boxes.get(image_id, [])):
            if matched[image_id][j]:
                continue
            value = iou(box, gt_box)
            if value > best_iou:
                best_iou = value
                best_j = j
        if best_j >= 0 and best_iou >= iou_threshold:
            matched[image_id][best_j] = True
            tp[rank] = 1.0

    tp_cum = np.cumsum(tp)
    precision = tp_cum / np.arange(1, len(order) + 1)
    recall = tp_cum / len(ground_truths)
    # all-point interpolation: monotone precision envelope integrated over recall
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    changed = np.flatnonzero(mrec[1:] != mrec[:-1]) + 1
    return float(((mrec[changed] - mrec[changed - 1]) * mpre[changed]).sum())


def mean_average_precision(
    predictions_by_class: dict[int, list[tuple[str, BBox, float]]],
    gts_by_class: dict[int, list[tuple[str, BBox]]],
    iou_threshold: float = 0.5,
) -> tuple[float, list[int]]:
    """Unweighted mean AP over classes with ground truth.

    Returns (mAP, skipped) where skipped lists classes that appear without
    any ground truth and are excluded from the mean.
    """
    with_gt = sorted(k for k, v in gts_by_class.items() if v)
    if not with_gt:
        raise DataError("mean average precision requires ground truth")
    all_classes = set(predictions_by_class) | set(gts_by_class)
    skipped = sorted(k for k in all_classes if not gts_by_class.get(k))
    aps = [
        average_precision(predictions_by_class.get(k, []), gts_by_class[k], iou_threshold)
        for k in with_gt
    ]
    return float(np.mean(aps)), skipped


def detection_map(
    records_by_image: dict[str, list[SurvivorRecord]],
    gts_by_image: dict[str, list[GroundTruthBox]],
    iou_threshold: float = 0.5,
) -> tuple[float, list[int]]:
    """mAP@iou_threshold of the surviving detections themselves."""
    predictions_by_class: dict[int, list[tuple[str, BBox, float]]] = {}
    for image_id, records in records_by_image.items():
        for rec in records:
            predictions_by_class.setdefault(rec.survivor.predicted_class, []).append(
                (image_id, rec.survivor.box, rec.survivor.score)
            )
    gts_by_class: dict[int, list[tuple[str, BBox]]] = {}
    for image_id, gts in gts_by_image.items():
        for gt in gts:
            gts_by_class.setdefault(gt.class_index, []).append((image_id, gt.box))
    return mean_average_precision(predictions_by_class, gts_by_class, iou_threshold)


def feature_correlations(table: MetricTable) -> list[tuple[str, str, float, float, bool]]:
    """Per-feature Pearson correlation against true IoU, sorted by |r| desc.

    Rows are (name, family, r, abs_r, degenerate); ties keep canonical
    column order.
    """
    from .features import feature_family

    rows = []
    for i, name in enumerate(table.feature_names):
        r, degenerate = pearson_flagged(table.features[:, i], table.true_iou)
        rows.append((name, feature_family(name), r, abs(r), degenerate))
    return sorted(rows, key=lambda row: -row[3])


@dataclass(frozen=True)
class SweepSettings:
    """Everything one threshold's worth of sweep work needs."""

    threshold: float
    tau: float
    num_classes: int
    families: tuple[str, ...]
    feature_sets: tuple[str, ...]
    tasks: tuple[str, ...]
    runs: int
    base_seed: int
    smote_enabled: bool
    smote_k: int
    collect_scatter: bool


@dataclass
class SweepCell:
    threshold: float
    family: str
    feature_set: str
    metric: str
    mean: float
    std: float
    values: tuple[float, ...]


@dataclass
class SweepReport:
    cells: list[SweepCell] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    detector_map: list[tuple[float, float]] = field(default_factory=list)
    scatter: dict[tuple[float, str, str], tuple[np.ndarray, np.ndarray]] = field(
        default_factory=dict
    )
    runs: int = 0
    base_seed: int = 0

    def cell(self, threshold: float, family: str, feature_set: str, metric: str) -> SweepCell:
        for c in self.cells:
            if (
                c.threshold == threshold
                and c.family == family
                and c.feature_set == feature_set
                and c.metric == metric
            ):
                return c
        raise KeyError((threshold, family, feature_set, metric))


def _metrics_for_run(
    settings: SweepSettings,
    train: MetricTable,
    val: MetricTable,
    family: str,
    feature_set: str,
    task: str,
    seed: int,
) -> tuple[dict[str, float], np.ndarray | None]:
    """Fit one model and score it on the validation half.

    Returns metric values keyed by name (missing keys mean the metric was
    degenerate for this run) plus regression predictions for scatter output.
    """
    columns = feature_set_columns(feature_set, settings.num_classes)
    if task == "classification":
        fit_table = train
        if settings.smote_enabled and train.is_tp.sum() not in (0, len(train)):
            fit_table = smote(train, k=settings.smote_k, seed=seed)
        y_train = fit_table.is_tp.astype(float)
    else:
        fit_table = train
        y_train = fit_table.true_iou
    model = make_model(family, task, seed=seed)
    model.fit(fit_table.columns(columns), y_train, feature_names=columns)
    predictions = model.predict(val.columns(columns))

    out: dict[str, float] = {}
    if task == "classification":
        out["accuracy"] = accuracy(val.is_tp, predictions)
        try:
            out["auroc"] = auroc(val.is_tp, predictions)
        except DataError:
            pass
        return out, None
    try:
        out["r2"] = r2(val.true_iou, predictions)
    except DataError:
        pass
    out["residual_std"] = residual_std(val.true_iou, predictions)
    return out, predictions


def _threshold_worker(
    args: tuple[
        SweepSettings,
        dict[str, list[CandidateBox]],
        dict[str, list[GroundTruthBox]],
        bool,
    ],
) -> tuple[list[SweepCell], list[str], tuple[float, float] | None, dict]:
    settings, candidates_by_image, gts_by_image, dropout = args
    t = settings.threshold
    records = extract_records(candidates_by_image, t, settings.tau)
    table = table_from_records(records, gts_by_image, settings.num_classes, dropout)

    warnings: list[str] = []
    map_entry: tuple[float, float] | None = None
    try:
        map_value, skipped = detection_map(records, gts_by_image)
        map_entry = (t, map_value)
        if skipped:
            warnings.append(
                f"threshold {t:g}: classes {skipped} have no ground truth; excluded from mAP"
            )
    except DataError as exc:
        warnings.append(f"threshold {t:g}: mAP skipped ({exc})")

    if len(table) < 4:
        warnings.append(
            f"threshold {t:g}: skipped, {len(table)} row(s) leave fewer than 2 validation rows"
        )
        return [], warnings, map_entry, {}

    values: dict[tuple[str, str, str], list[float]] = {}
    scatter: dict[tuple[float, str, str], tuple[np.ndarray, np.ndarray]] = {}
    for run in range(settings.runs):
        seed = settings.base_seed + run
        train, val = split_resample(table, seed)
        if val.synthetic.any():
            raise AssertionError("synthetic rows leaked into a validation half")
        for family in settings.families:
            for feature_set in settings.feature_sets:
                for task in settings.tasks:
                    try:
                        metrics, predictions = _metrics_for_run(
                            settings, train, val, family, feature_set, task, seed
                        )
                    except DataError as exc:
                        warnings.append(
                            f"threshold {t:g} run {run} {family}/{feature_set}/{task}: {exc}"
                        )
                        continue
                    for metric, value in metrics.items():
                        values.setdefault((family, feature_set, metric), []).append(value)
                    if (
                        settings.collect_scatter
                        and run == 0
                        and predictions is not None
                    ):
                        scatter[(t, family, feature_set)] = (
                            val.true_iou.copy(),
                            predictions,
                        )

    cells: list[SweepCell] = []
    for family in settings.families:
        for feature_set in settings.feature_sets:
            for metric in CLASSIFICATION_METRICS + REGRESSION_METRICS:
                key = (family, feature_set, metric)
                if key not in values:
                    continue
                got = values[key]
                if len(got) != settings.runs:
                    warnings.append(
                        f"threshold {t:g} {family}/{feature_set}/{metric}: "
                        f"only {len(got)}/{settings.runs} runs valid; cell dropped"
                    )
                    continue
                arr = np.asarray(got)
                cells.append(
                    SweepCell(
                        threshold=t,
                        family=family,
                        feature_set=feature_set,
                        metric=metric,
                        mean=float(arr.mean()),
                        std=float(arr.std()),
                        values=tuple(got),
                    )
                )
    return cells, warnings, map_entry, scatter


def sweep(
    candidates_by_image: dict[str, list[CandidateBox]],
    gts_by_image: dict[str, list[GroundTruthBox]],
    *,
    schedule: list[float],
    num_classes: int,
    families: tuple[str, ...] = ("gb",),
    feature_sets: tuple[str, ...] = ("baseline", "metadetect"),
    tasks: tuple[str, ...] = ("classification", "regression"),
    runs: int = 10,
    base_seed: int = 0,
    tau: float = DEFAULT_TAU,
    smote_enabled: bool = True,
    smote_k: int = DEFAULT_SMOTE_K,
    collect_scatter: bool = False,
    jobs: int = 1,
) -> SweepReport:
    """Benchmark the requested families and feature sets across thresholds.

    Per threshold: re-extract the table, then for each of `runs` seeded
    resamples fit on the training half (SMOTE-balanced for classification)
    and score the validation half. Cells report mean and population std
    over exactly `runs` values; anything degenerate is dropped with a
    warning instead.
    """
    if runs < 1:
        raise ConfigError(f"runs must be >= 1, got {runs}")
    for feature_set in feature_sets:
        if feature_set not in FEATURE_SETS:
            raise ConfigError(
                f"unknown feature set {feature_set!r}; expected one of {FEATURE_SETS}"
            )
    dropout = "metadetect-dropout" in feature_sets
    worker_args = [
        (
            SweepSettings(
                threshold=t,
                tau=tau,
                num_classes=num_classes,
                families=tuple(families),
                feature_sets=tuple(feature_sets),
                tasks=tuple(tasks),
                runs=runs,
                base_seed=base_seed,
                smote_enabled=smote_enabled,
                smote_k=smote_k,
                collect_scatter=collect_scatter,
            ),
            candidates_by_image,
            gts_by_image,
            dropout,
        )
        for t in schedule
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_threshold_worker, worker_args))
    else:
        results = [_threshold_worker(a) for a in worker_args]

    report = SweepReport(runs=runs, base_seed=base_seed)
    for cells, warnings, map_entry, scatter in results:
        report.cells.extend(cells)
        report.warnings.extend(warnings)
        if map_entry is not None:
            report.detector_map.append(map_entry)
        report.scatter.update(scatter)
    return report
