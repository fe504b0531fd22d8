"""Shallow fully-connected network trained by hand-written backprop.

Two ReLU hidden layers feed one logistic output unit. Classification
minimizes cross-entropy on the output probability; regression minimizes
squared loss on the squashed output, so predictions live in (0, 1) either
way. Optimization is mini-batch SGD with classical momentum. The forward,
loss and gradient math is exposed as module functions so the gradients can
be checked against finite differences.
"""

from __future__ import annotations

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

Params = tuple[list[np.ndarray], list[np.ndarray]]


def init_parameters(layer_sizes: list[int], rng: np.random.Generator) -> Params:
    """Symmetric variance-scaled uniform init, biases at zero."""
    weights: list[np.ndarray] = []
    biases: list[np.ndarray] = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def forward(weights: list[np.ndarray], biases: list[np.ndarray], X: np.ndarray) -> np.ndarray:
    """Output probabilities/estimates for a batch."""
    a = X
    for W, b in zip(weights[:-1], biases[:-1]):
        a = np.maximum(a @ W + b, 0.0)
    return sigmoid(a @ weights[-1] + biases[-1]).ravel()


def loss_and_gradients(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    X: np.ndarray,
    y: np.ndarray,
    task: str,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean loss over the batch and its exact parameter gradients."""
    m = X.shape[0]
    pre: list[np.ndarray] = []
    post: list[np.ndarray] = [X]
    a = X
    for W, b in zip(weights[:-1], biases[:-1]):
        z = a @ W + b
        a = np.maximum(z, 0.0)
        pre.append(z)
        post.append(a)
    z_out = (a @ weights[-1] + biases[-1]).ravel()
    p = sigmoid(z_out)

    if task == "classification":
        clipped = np.clip(p, 1e-12, 1.0 - 1e-12)
        loss = float(-np.mean(y * np.log(clipped) + (1.0 - y) * np.log(1.0 - clipped)))
        dz = (p - y) / m
    else:
        loss = float(np.mean((p - y) ** 2))
        dz = 2.0 * (p - y) * p * (1.0 - p) / m

    grad_w: list[np.ndarray] = [np.empty(0)] * len(weights)
    grad_b: list[np.ndarray] = [np.empty(0)] * len(biases)
    delta = dz[:, None]
    grad_w[-1] = post[-1].T @ delta
    grad_b[-1] = delta.sum(axis=0)
    for layer in range(len(weights) - 2, -1, -1):
        delta = (delta @ weights[layer + 1].T) * (pre[layer] > 0.0)
        grad_w[layer] = post[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
    return loss, grad_w, grad_b


class ShallowNetwork(BaseEstimator):
    """Two-hidden-layer network for IoU regression or TP classification.

    :param task: "regression" or "classification"
    :param hidden_sizes: widths of the two hidden layers
    :param epochs: passes over the training data
    :param step_size: SGD learning rate
    :param momentum: classical momentum coefficient
    :param batch_size: mini-batch size (last batch may be smaller)
    :param random_state: seed for init and batch shuffling
    """

    family = "nn"

    def __init__(
        self,
        task: str = "regression",
        hidden_sizes: tuple[int, ...] = (50, 50),
        epochs: int = 200,
        step_size: float = 1e-3,
        momentum: float = 0.9,
        batch_size: int = 64,
        random_state: int = 0,
    ):
        self.task = task
        self.hidden_sizes = hidden_sizes
        self.epochs = epochs
        self.step_size = step_size
        self.momentum = momentum
        self.batch_size = batch_size
        self.random_state = random_state

    def _check_hyperparameters(self) -> None:
        check_task(self.task)
        if len(self.hidden_sizes) == 0 or any(h < 1 for h in self.hidden_sizes):
            raise ConfigError(f"hidden_sizes must be positive, got {self.hidden_sizes}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.step_size > 0.0:
            raise ConfigError(f"step_size must be > 0, got {self.step_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")

    def fit(self, X, y, feature_names=None) -> "ShallowNetwork":
        self._check_hyperparameters()
        X, y = validate_fit_inputs(self, X, y)
        Xs = store_fit_metadata(self, X, feature_names)
        rng = np.random.default_rng(self.random_state)
        sizes = [Xs.shape[1], *self.hidden_sizes, 1]
        weights, biases = init_parameters(sizes, rng)
        vel_w = [np.zeros_like(W) for W in weights]
        vel_b = [np.zeros_like(b) for b in biases]
        n = Xs.shape[0]
        for _ in range(self.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                batch = perm[start : start + self.batch_size]
                _, grad_w, grad_b = loss_and_gradients(
                    weights, biases, Xs[batch], y[batch], self.task
                )
                for layer in range(len(weights)):
                    vel_w[layer] = self.momentum * vel_w[layer] - self.step_size * grad_w[layer]
                    vel_b[layer] = self.momentum * vel_b[layer] - self.step_size * grad_b[layer]
                    weights[layer] = weights[layer] + vel_w[layer]
                    biases[layer] = biases[layer] + vel_b[layer]
        self.weights_ = weights
        self.biases_ = biases
        return self

    def predict(self, X) -> np.ndarray:
        """TP probability (classification) or IoU estimate; both in (0, 1)."""
        Xs = validate_predict_input(self, X)
        return forward(self.weights_, self.biases_, Xs)

    def predict_proba(self, X) -> np.ndarray:
        if self.task != "classification":
            raise AttributeError("predict_proba is only defined for classification")
        p = self.predict(X)
        return np.column_stack([1.0 - p, p])
