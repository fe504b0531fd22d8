"""Meta models: TP-vs-FP classifiers and IoU regressors.

Three families share one estimator surface (fit/predict, get_params):
lr (linear/logistic), gb (gradient-boosted trees), nn (shallow network).
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, SchemaError
from .base import TASKS
from .boosting import GradientBoosting
from .linear import LinearModel
from .network import ShallowNetwork
from .serialize import load_model, save_model

FAMILIES = ("lr", "gb", "nn")

__all__ = [
    "FAMILIES",
    "TASKS",
    "GradientBoosting",
    "LinearModel",
    "ShallowNetwork",
    "load_model",
    "make_model",
    "predict",
    "save_model",
]


def make_model(family: str, task: str, seed: int = 0):
    """Instantiate a family with its default hyperparameters."""
    if family == "lr":
        return LinearModel(task=task)
    if family == "gb":
        return GradientBoosting(task=task)
    if family == "nn":
        return ShallowNetwork(task=task, random_state=seed)
    raise ConfigError(f"unknown model family {family!r}; expected one of {FAMILIES}")


def predict(model, X, feature_names: list[str] | None = None) -> np.ndarray:
    """Predict with a header check when both sides carry feature names."""
    trained = getattr(model, "feature_names_in_", None)
    if feature_names is not None and trained is not None and list(feature_names) != trained:
        raise SchemaError(
            "feature names do not match the training header: "
            f"expected {trained}, got {list(feature_names)}"
        )
    return model.predict(X)
