"""boxmeta: per-box uncertainty metrics and meta prediction for detectors.

The pipeline turns raw detector outputs (candidate boxes with scores and
class probabilities) into one metric row per NMS survivor, then trains meta
models on those rows: a classifier separating true from false positives and
a regressor predicting localization IoU, both benchmarked against the plain
objectness score.
"""

from __future__ import annotations

from .dataset import MetricTable, extract_table, smote, split_resample
from .errors import (
    BoxmetaError,
    ConfigError,
    DataError,
    FormatError,
    SchemaError,
)
from .evaluation import (
    SweepReport,
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
from .features import (
    base_feature_names,
    build_dropout_features,
    build_features,
    dropout_feature_names,
    feature_names,
    feature_set_columns,
    iou_pb,
    label_iou,
)
from .geometry import BBox, area, circumference, iou
from .models import (
    GradientBoosting,
    LinearModel,
    ShallowNetwork,
    load_model,
    make_model,
    save_model,
)
from .pipeline import (
    DEFAULT_TAU,
    CandidateBox,
    GroundTruthBox,
    SurvivorRecord,
    attach_dropout,
    nms,
    score_filter,
    threshold_schedule,
)
from .synthgen import SceneConfig, generate

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "BoxmetaError",
    "CandidateBox",
    "ConfigError",
    "DEFAULT_TAU",
    "DataError",
    "FormatError",
    "GradientBoosting",
    "GroundTruthBox",
    "LinearModel",
    "MetricTable",
    "SceneConfig",
    "SchemaError",
    "ShallowNetwork",
    "SurvivorRecord",
    "SweepReport",
    "accuracy",
    "area",
    "attach_dropout",
    "auroc",
    "average_precision",
    "base_feature_names",
    "build_dropout_features",
    "build_features",
    "circumference",
    "detection_map",
    "dropout_feature_names",
    "extract_table",
    "feature_correlations",
    "feature_names",
    "feature_set_columns",
    "generate",
    "iou",
    "iou_pb",
    "label_iou",
    "load_model",
    "make_model",
    "mean_average_precision",
    "nms",
    "pearson",
    "pearson_flagged",
    "r2",
    "residual_std",
    "save_model",
    "score_filter",
    "smote",
    "split_resample",
    "sweep",
    "threshold_schedule",
]
