"""Per-survivor uncertainty metrics and IoU labels.

Every NMS survivor becomes one row of metrics. The base set has 46 + C
columns in a fixed order; when dropout repeats are available, 20 further
columns summarize the repeated forward passes of the survivor's anchor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SchemaError
from .geometry import area, circumference, iou
from .pipeline import GroundTruthBox, SurvivorRecord

STAT_NAMES = ("min", "max", "mean", "std")

# Variables summarized over the suppression cluster (survivor + suppressed).
_CLUSTER_VARS = ("r_min", "r_max", "c_min", "c_max", "score", "size", "circumference")
# Variables summarized over the dropout repeats (survivor + dropout_obs).
_DROPOUT_VARS = ("r_min", "r_max", "c_min", "c_max", "score")

_RATIO_GUARD = 1e-12


def base_feature_names(num_classes: int) -> list[str]:
    """Canonical 46 + C column names, in extraction order."""
    names = ["n_candidates", "r_min", "r_max", "c_min", "c_max", "score"]
    names += [f"prob_{k}" for k in range(1, num_classes + 1)]
    names += ["size", "circumference", "iou_pb"]
    names += [f"{var}_{stat}" for var in _CLUSTER_VARS for stat in STAT_NAMES]
    names += [f"iou_pb_{stat}" for stat in STAT_NAMES]
    names += ["rel_size"] + [f"rel_size_{stat}" for stat in STAT_NAMES]
    return names


def dropout_feature_names() -> list[str]:
    """The 20 dropout-statistic column names, in extraction order."""
    return [f"{var}_{stat}_mc" for var in _DROPOUT_VARS for stat in STAT_NAMES]


def feature_names(num_classes: int, dropout: bool) -> list[str]:
    names = base_feature_names(num_classes)
    if dropout:
        names += dropout_feature_names()
    return names


def feature_set_columns(feature_set: str, num_classes: int) -> list[str]:
    """Columns a model sees for one of the benchmark feature sets."""
    if feature_set == "baseline":
        return ["score"]
    if feature_set == "metadetect":
        return base_feature_names(num_classes)
    if feature_set == "metadetect-dropout":
        return base_feature_names(num_classes) + dropout_feature_names()
    raise ConfigError(
        f"unknown feature set {feature_set!r}; expected baseline, metadetect "
        "or metadetect-dropout"
    )


def feature_family(name: str) -> str:
    """Coarse grouping of a feature column, for ranking reports.

    score: derived from objectness scores. geometry: derived from box
    coordinates only. consensus: cluster agreement (sizes, pairwise IoU).
    class_probs: the raw class posterior.
    """
    if name == "score" or name.startswith("score_"):
        return "score"
    if name.startswith("prob_"):
        return "class_probs"
    if name == "n_candidates" or name.startswith("iou_pb"):
        return "consensus"
    return "geometry"


@dataclass
class MetricRow:
    """One survivor's metrics plus its IoU label."""

    image_id: str
    values: np.ndarray
    true_iou: float
    is_tp: bool


def _stats(values: list[float]) -> list[float]:
    arr = np.asarray(values, dtype=float)
    # population std: a singleton cluster has zero spread by definition
    return [float(arr.min()), float(arr.max()), float(arr.mean()), float(arr.std())]


def _guarded_ratio(num: float, den: float) -> float:
    if abs(den) < _RATIO_GUARD:
        return 0.0
    return num / den


def iou_pb(rec: SurvivorRecord) -> float:
    """IoU between the survivor and the best box it suppressed.

    "Best" means highest score, ties resolved by suppression order. Returns 0
    when the survivor suppressed nothing.
    """
    if not rec.suppressed:
        return 0.0
    best = max(rec.suppressed, key=lambda c: c.score)
    return iou(rec.survivor.box, best.box)


def build_features(rec: SurvivorRecord, num_classes: int) -> np.ndarray:
    """The 46 + C base metrics for one survivor, in canonical order."""
    s = rec.survivor
    if len(s.probs) != num_classes:
        raise SchemaError(
            f"candidate carries {len(s.probs)} class probabilities, expected {num_classes}"
        )
    cluster = [s] + rec.suppressed
    size = area(s.box)
    circ = circumference(s.box)

    values: list[float] = [float(rec.n)]
    values += [s.box.r_min, s.box.r_max, s.box.c_min, s.box.c_max, s.score]
    values += list(s.probs)
    values += [size, circ, iou_pb(rec)]

    per_var = {
        "r_min": [c.box.r_min for c in cluster],
        "r_max": [c.box.r_max for c in cluster],
        "c_min": [c.box.c_min for c in cluster],
        "c_max": [c.box.c_max for c in cluster],
        "score": [c.score for c in cluster],
        "size": [area(c.box) for c in cluster],
        "circumference": [circumference(c.box) for c in cluster],
    }
    for var in _CLUSTER_VARS:
        values += _stats(per_var[var])

    if rec.suppressed:
        values += _stats([iou(s.box, c.box) for c in rec.suppressed])
    else:
        values += [0.0, 0.0, 0.0, 0.0]

    circ_stats = _stats(per_var["circumference"])
    values.append(_guarded_ratio(size, circ))
    values += [_guarded_ratio(size, g) for g in circ_stats]

    return np.asarray(values, dtype=float)


def build_dropout_features(rec: SurvivorRecord) -> np.ndarray:
    """The 20 dropout metrics: stats over the survivor plus its J repeats.

    With no repeats attached (J = 0) every min/max/mean collapses to the
    survivor's own value and every std to 0.
    """
    boxes = [rec.survivor] + rec.dropout_obs
    values: list[float] = []
    per_var = {
        "r_min": [c.box.r_min for c in boxes],
        "r_max": [c.box.r_max for c in boxes],
        "c_min": [c.box.c_min for c in boxes],
        "c_max": [c.box.c_max for c in boxes],
        "score": [c.score for c in boxes],
    }
    for var in _DROPOUT_VARS:
        values += _stats(per_var[var])
    return np.asarray(values, dtype=float)


def label_iou(rec: SurvivorRecord, ground_truths: list[GroundTruthBox]) -> float:
    """Max IoU between the survivor and same-class ground truth; 0 if none.

    One ground-truth box may label several survivors; labeling does not
    consume ground truth.
    """
    predicted = rec.survivor.predicted_class
    best = 0.0
    for gt in ground_truths:
        if gt.class_index != predicted:
            continue
        value = iou(rec.survivor.box, gt.box)
        if value > best:
            best = value
    return best


def build_row(
    rec: SurvivorRecord,
    ground_truths: list[GroundTruthBox],
    num_classes: int,
    dropout: bool,
) -> MetricRow:
    """Metrics plus label for one survivor."""
    values = build_features(rec, num_classes)
    if dropout:
        values = np.concatenate([values, build_dropout_features(rec)])
    if not np.isfinite(values).all():
        raise SchemaError(
            f"non-finite metric value for image {rec.image_id!r}, "
            f"anchor {rec.survivor.anchor_id}"
        )
    true_iou = label_iou(rec, ground_truths)
    return MetricRow(
        image_id=rec.image_id,
        values=values,
        true_iou=true_iou,
        is_tp=true_iou >= 0.5,
    )
