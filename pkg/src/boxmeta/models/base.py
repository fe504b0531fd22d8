"""Shared fitting plumbing for the meta models.

All three families standardize inputs with per-feature train statistics and
validate shapes the same way; the actual learning math lives in the family
modules.
"""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..errors import ConfigError, DataError, SchemaError

TASKS = ("classification", "regression")


def check_task(task: str) -> None:
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")


def validate_fit_inputs(estimator, X, y) -> tuple[np.ndarray, np.ndarray]:
    X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
    y = np.asarray(y, dtype=np.float64)
    if estimator.task == "classification":
        values = np.unique(y)
        if not np.isin(values, (0.0, 1.0)).all():
            raise DataError(
                f"classification targets must be 0/1, got values {values}"
            )
        if len(values) < 2:
            raise DataError("classification targets contain a single class")
    return X, y


def fit_scaler(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and std; constant features get std 1 so they map to 0."""
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return mean, std


def validate_predict_input(estimator, X) -> np.ndarray:
    check_is_fitted(estimator)
    X = check_array(X, dtype=np.float64)
    if X.shape[1] != estimator.n_features_in_:
        raise SchemaError(
            f"model was fit on {estimator.n_features_in_} features, "
            f"input has {X.shape[1]}"
        )
    return (X - estimator.scaler_mean_) / estimator.scaler_std_


def store_fit_metadata(estimator, X: np.ndarray, feature_names) -> np.ndarray:
    """Record scaler and header state; returns the standardized matrix."""
    estimator.n_features_in_ = X.shape[1]
    if feature_names is not None:
        if len(feature_names) != X.shape[1]:
            raise SchemaError(
                f"{len(feature_names)} feature names for {X.shape[1]} columns"
            )
        estimator.feature_names_in_ = list(feature_names)
    estimator.scaler_mean_, estimator.scaler_std_ = fit_scaler(X)
    return (X - estimator.scaler_mean_) / estimator.scaler_std_


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))
