"""Linear meta models: ridge least squares and logistic regression.

Regression solves the standardized ridge normal equations in closed form
(small damping for conditioning only). Classification runs full-batch
gradient descent on the logistic loss with a step size of 1/L, where L is
the curvature bound of the loss, so every step decreases the loss.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .base import (
    check_task,
    sigmoid,
    store_fit_metadata,
    validate_fit_inputs,
    validate_predict_input,
)


class LinearModel(BaseEstimator):
    """Linear meta model for IoU regression or TP classification.

    :param task: "regression" or "classification"
    :param ridge: damping added to the normal equations (regression only)
    :param max_iter: gradient descent iteration cap (classification only)
    :param tol: gradient norm below which descent stops (classification only)
    """

    family = "lr"

    def __init__(
        self,
        task: str = "regression",
        ridge: float = 1e-6,
        max_iter: int = 5000,
        tol: float = 1e-6,
    ):
        self.task = task
        self.ridge = ridge
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y, feature_names=None) -> "LinearModel":
        check_task(self.task)
        X, y = validate_fit_inputs(self, X, y)
        Xs = store_fit_metadata(self, X, feature_names)
        if self.task == "regression":
            self._fit_regression(Xs, y)
        else:
            self._fit_classification(Xs, y)
        return self

    def _fit_regression(self, Xs: np.ndarray, y: np.ndarray) -> None:
        # standardized columns have zero mean, so the intercept decouples
        self.intercept_ = float(y.mean())
        gram = Xs.T @ Xs + self.ridge * np.eye(Xs.shape[1])
        self.coef_ = np.linalg.solve(gram, Xs.T @ (y - self.intercept_))
        self.n_iter_ = 0

    def _fit_classification(self, Xs: np.ndarray, y: np.ndarray) -> None:
        n = Xs.shape[0]
        Xb = np.hstack([Xs, np.ones((n, 1))])
        # logistic loss curvature is bounded by eigmax(X^T X) / (4n); step
        # 1/L keeps full-batch descent monotone
        curvature = float(np.linalg.eigvalsh(Xb.T @ Xb)[-1]) / (4.0 * n)
        step = 1.0 / curvature
        w = np.zeros(Xb.shape[1])
        iterations = 0
        for iterations in range(1, self.max_iter + 1):
            grad = Xb.T @ (sigmoid(Xb @ w) - y) / n
            if float(np.linalg.norm(grad)) < self.tol:
                iterations -= 1
                break
            w = w - step * grad
        self.coef_ = w[:-1]
        self.intercept_ = float(w[-1])
        self.n_iter_ = iterations

    def predict(self, X) -> np.ndarray:
        """TP probability (classification) or [0,1]-clipped IoU estimate."""
        Xs = validate_predict_input(self, X)
        raw = Xs @ self.coef_ + self.intercept_
        if self.task == "classification":
            return sigmoid(raw)
        return np.clip(raw, 0.0, 1.0)

    def predict_proba(self, X) -> np.ndarray:
        if self.task != "classification":
            raise AttributeError("predict_proba is only defined for classification")
        p = self.predict(X)
        return np.column_stack([1.0 - p, p])
