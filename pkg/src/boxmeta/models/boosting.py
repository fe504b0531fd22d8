"""Gradient-boosted regression trees, written from first principles.

Regression boosts squared loss by fitting each tree to the current
residuals. Classification boosts logistic loss: trees fit the negative
gradient (y - p) and each leaf takes one Newton step, sum(g) / sum(p(1-p)).
Split finding is exact greedy over sorted distinct feature values with
variance gain (regression) or Newton gain (classification); ties resolve to
the lowest feature index, then the lowest threshold. Training is fully
deterministic: no subsampling anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ..errors import ConfigError
from .base import (
    check_task,
    sigmoid,
    store_fit_metadata,
    validate_fit_inputs,
    validate_predict_input,
)

_EPS = 1e-16
_MIN_GAIN = 1e-12


@dataclass
class TreeNode:
    """Binary split node; leaves carry only a value."""

    value: float
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _best_split(
    X: np.ndarray,
    order: np.ndarray,
    mask: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray | None,
    min_leaf: int,
) -> tuple[int, float] | None:
    """Exact greedy split over every feature and distinct value boundary.

    Returns (feature, threshold) maximizing the gain, splitting as
    x <= threshold, or None when no split beats the no-split score. The
    threshold is an observed value, so the left child is exactly the sorted
    prefix the gain was computed for.
    """
    best_gain = _MIN_GAIN
    best: tuple[int, float] | None = None
    for j in range(X.shape[1]):
        col_order = order[:, j]
        sel = col_order[mask[col_order]]
        v = X[sel, j]
        m = len(sel)
        g_cum = np.cumsum(grad[sel])
        if hess is None:
            h_cum = np.arange(1, m + 1, dtype=float)
        else:
            h_cum = np.cumsum(hess[sel])
        g_total = g_cum[-1]
        h_total = h_cum[-1]
        boundary = v[:-1] < v[1:]
        counts = np.arange(1, m, dtype=float)
        valid = boundary & (counts >= min_leaf) & (m - counts >= min_leaf)
        if not valid.any():
            continue
        g_left = g_cum[:-1]
        h_left = h_cum[:-1]
        gain = (
            g_left**2 / (h_left + _EPS)
            + (g_total - g_left) ** 2 / (h_total - h_left + _EPS)
            - g_total**2 / (h_total + _EPS)
        )
        gain[~valid] = -np.inf
        pos = int(np.argmax(gain))  # first max: lowest threshold wins ties
        if gain[pos] > best_gain:  # strict: lowest feature index wins ties
            best_gain = float(gain[pos])
            best = (j, float(v[pos]))
    return best


def _build_tree(
    X: np.ndarray,
    order: np.ndarray,
    mask: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray | None,
    depth: int,
    max_depth: int,
    min_leaf: int,
) -> TreeNode:
    count = int(mask.sum())
    if hess is None:
        value = float(grad[mask].sum() / count)
    else:
        value = float(grad[mask].sum() / (hess[mask].sum() + _EPS))
    if depth >= max_depth or count < 2 * min_leaf:
        return TreeNode(value=value)
    split = _best_split(X, order, mask, grad, hess, min_leaf)
    if split is None:
        return TreeNode(value=value)
    feature, threshold = split
    left_mask = mask & (X[:, feature] <= threshold)
    right_mask = mask & ~left_mask
    return TreeNode(
        value=value,
        feature=feature,
        threshold=threshold,
        left=_build_tree(X, order, left_mask, grad, hess, depth + 1, max_depth, min_leaf),
        right=_build_tree(X, order, right_mask, grad, hess, depth + 1, max_depth, min_leaf),
    )


def _tree_predict(node: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    stack = [(node, np.ones(X.shape[0], dtype=bool))]
    while stack:
        current, mask = stack.pop()
        if current.is_leaf:
            out[mask] = current.value
            continue
        left = mask & (X[:, current.feature] <= current.threshold)
        stack.append((current.left, left))
        stack.append((current.right, mask & ~left))
    return out


class GradientBoosting(BaseEstimator):
    """Boosted trees for IoU regression or TP classification.

    :param task: "regression" or "classification"
    :param n_trees: boosting rounds
    :param max_depth: tree depth cap
    :param learning_rate: shrinkage applied to every tree
    :param min_leaf: minimum samples in each leaf
    """

    family = "gb"

    def __init__(
        self,
        task: str = "regression",
        n_trees: int = 100,
        max_depth: int = 3,
        learning_rate: float = 0.1,
        min_leaf: int = 5,
    ):
        self.task = task
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.min_leaf = min_leaf

    def _check_hyperparameters(self) -> None:
        check_task(self.task)
        if self.n_trees < 0:
            raise ConfigError(f"n_trees must be >= 0, got {self.n_trees}")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if not self.learning_rate > 0.0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.min_leaf < 1:
            raise ConfigError(f"min_leaf must be >= 1, got {self.min_leaf}")

    def fit(self, X, y, feature_names=None) -> "GradientBoosting":
        self._check_hyperparameters()
        X, y = validate_fit_inputs(self, X, y)
        Xs = store_fit_metadata(self, X, feature_names)
        order = np.argsort(Xs, axis=0, kind="stable")
        mask = np.ones(Xs.shape[0], dtype=bool)
        self.trees_: list[TreeNode] = []
        losses: list[float] = []
        if self.task == "regression":
            self.init_ = float(y.mean())
            raw = np.full(Xs.shape[0], self.init_)
            losses.append(float(np.mean((y - raw) ** 2)))
            for _ in range(self.n_trees):
                residual = y - raw
                tree = _build_tree(
                    Xs, order, mask, residual, None, 0, self.max_depth, self.min_leaf
                )
                raw = raw + self.learning_rate * _tree_predict(tree, Xs)
                self.trees_.append(tree)
                losses.append(float(np.mean((y - raw) ** 2)))
        else:
            base = float(y.mean())
            self.init_ = float(np.log(base / (1.0 - base)))
            raw = np.full(Xs.shape[0], self.init_)
            losses.append(_log_loss(y, sigmoid(raw)))
            for _ in range(self.n_trees):
                p = sigmoid(raw)
                tree = _build_tree(
                    Xs, order, mask, y - p, p * (1.0 - p), 0, self.max_depth, self.min_leaf
                )
                raw = raw + self.learning_rate * _tree_predict(tree, Xs)
                self.trees_.append(tree)
                losses.append(_log_loss(y, sigmoid(raw)))
        self.train_losses_ = losses
        return self

    def _raw(self, Xs: np.ndarray) -> np.ndarray:
        raw = np.full(Xs.shape[0], self.init_)
        for tree in self.trees_:
            raw = raw + self.learning_rate * _tree_predict(tree, Xs)
        return raw

    def predict(self, X) -> np.ndarray:
        """TP probability (classification) or [0,1]-clipped IoU estimate."""
        Xs = validate_predict_input(self, X)
        raw = self._raw(Xs)
        if self.task == "classification":
            return sigmoid(raw)
        return np.clip(raw, 0.0, 1.0)

    def predict_proba(self, X) -> np.ndarray:
        if self.task != "classification":
            raise AttributeError("predict_proba is only defined for classification")
        p = self.predict(X)
        return np.column_stack([1.0 - p, p])


def _log_loss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
