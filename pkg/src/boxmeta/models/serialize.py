"""Versioned text serialization for fitted meta models.

Model files are JSON with a format tag and version, the family and task,
the training header, scaler statistics and family-specific parameters.
Floats round-trip exactly (shortest-repr encoding), so a reloaded model
predicts bit-identically.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .boosting import GradientBoosting, TreeNode
from .linear import LinearModel
from .network import ShallowNetwork

FORMAT_TAG = "boxmeta-model"
FORMAT_VERSION = 1

_FAMILIES = {"lr": LinearModel, "gb": GradientBoosting, "nn": ShallowNetwork}


def _tree_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"value": node.value}
    return {
        "value": node.value,
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _tree_to_dict(node.left),
        "right": _tree_to_dict(node.right),
    }


def _tree_from_dict(data: dict) -> TreeNode:
    if "feature" not in data:
        return TreeNode(value=data["value"])
    return TreeNode(
        value=data["value"],
        feature=data["feature"],
        threshold=data["threshold"],
        left=_tree_from_dict(data["left"]),
        right=_tree_from_dict(data["right"]),
    )


def save_model(model, path: str | Path, metadata: dict | None = None) -> None:
    """Write a fitted model; metadata is carried through verbatim."""
    payload: dict = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "family": model.family,
        "task": model.task,
        "hyperparameters": _jsonable(model.get_params()),
        "n_features": int(model.n_features_in_),
        "feature_names": getattr(model, "feature_names_in_", None),
        "scaler_mean": model.scaler_mean_.tolist(),
        "scaler_std": model.scaler_std_.tolist(),
        "metadata": metadata or {},
    }
    if model.family == "lr":
        payload["params"] = {
            "coef": model.coef_.tolist(),
            "intercept": model.intercept_,
            "n_iter": model.n_iter_,
        }
    elif model.family == "gb":
        payload["params"] = {
            "init": model.init_,
            "trees": [_tree_to_dict(t) for t in model.trees_],
        }
    elif model.family == "nn":
        payload["params"] = {
            "weights": [W.tolist() for W in model.weights_],
            "biases": [b.tolist() for b in model.biases_],
        }
    else:
        raise FormatError(f"unknown model family {model.family!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_model(path: str | Path):
    """Reconstruct a fitted model; returns (model, metadata)."""
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a valid model file: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != FORMAT_TAG:
        raise FormatError(f"{path}: not a {FORMAT_TAG} file")
    if payload.get("version") != FORMAT_VERSION:
        raise FormatError(
            f"{path}: unsupported model format version {payload.get('version')!r}"
        )
    family = payload.get("family")
    if family not in _FAMILIES:
        raise FormatError(f"{path}: unknown model family {family!r}")
    hyper = payload["hyperparameters"]
    if family == "nn":
        hyper = dict(hyper, hidden_sizes=tuple(hyper["hidden_sizes"]))
    model = _FAMILIES[family](**hyper)
    model.n_features_in_ = payload["n_features"]
    if payload.get("feature_names") is not None:
        model.feature_names_in_ = list(payload["feature_names"])
    model.scaler_mean_ = np.asarray(payload["scaler_mean"], dtype=float)
    model.scaler_std_ = np.asarray(payload["scaler_std"], dtype=float)
    params = payload["params"]
    if family == "lr":
        model.coef_ = np.asarray(params["coef"], dtype=float)
        model.intercept_ = float(params["intercept"])
        model.n_iter_ = int(params["n_iter"])
    elif family == "gb":
        model.init_ = float(params["init"])
        model.trees_ = [_tree_from_dict(t) for t in params["trees"]]
    else:
        model.weights_ = [np.asarray(W, dtype=float) for W in params["weights"]]
        model.biases_ = [np.asarray(b, dtype=float) for b in params["biases"]]
    return model, payload.get("metadata", {})


def _jsonable(params: dict) -> dict:
    out = {}
    for key, value in params.items():
        if isinstance(value, tuple):
            value = list(value)
        out[key] = value
    return out
