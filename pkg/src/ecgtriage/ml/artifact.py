"""Versioned JSON model bundle for exact reload.

The bundle holds everything inference needs: forest node arrays,
scaler and imputer statistics, the selected feature names, and the
hyperparameters/seed that produced the fit. Serialization is
deterministic (sorted keys, fixed separators) so identical runs write
byte-identical artifacts, and floats round-trip exactly through JSON's
shortest-repr encoding.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .forest import ForestClassifier
from .scaler import MedianImputer, MinMaxScaler

FORMAT_VERSION = 1

_TREE_KEYS = ("feat", "thr", "left", "right", "proba", "n")
_INT_KEYS = {"feat", "left", "right", "n"}


def model_to_dict(forest: ForestClassifier,
                  scaler: MinMaxScaler | None = None,
                  imputer: MedianImputer | None = None,
                  features: list[str] | None = None) -> dict:
    if not hasattr(forest, "trees_"):
        raise ValueError("forest must be fitted before serialization")
    out = {
        "format_version": FORMAT_VERSION,
        "params": forest.get_params(),
        "n_features": forest.n_features_,
        "single_class": forest.single_class_,
        "feature_importances": forest.feature_importances_.tolist(),
        "trees": {k: forest.trees_[k].tolist() for k in _TREE_KEYS},
    }
    if scaler is not None:
        out["scaler"] = {"min": scaler.min_.tolist(),
                         "scale": scaler.scale_.tolist()}
    if imputer is not None:
        out["imputer"] = {"fill": imputer.fill_.tolist()}
    if features is not None:
        out["features"] = list(features)
    return out


def model_from_dict(blob: dict) -> dict:
    """Rebuilds {forest, scaler, imputer, features} from a bundle."""
    version = blob.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported artifact version {version!r}")
    forest = ForestClassifier(**blob["params"])
    forest.n_features_ = int(blob["n_features"])
    forest.single_class_ = bool(blob["single_class"])
    forest.feature_importances_ = np.array(blob["feature_importances"])
    forest.trees_ = {
        k: np.array(blob["trees"][k],
                    dtype=np.int64 if k in _INT_KEYS else np.float64)
        for k in _TREE_KEYS}
    out = {"forest": forest, "scaler": None, "imputer": None,
           "features": blob.get("features")}
    if "scaler" in blob:
        scaler = MinMaxScaler()
        scaler.min_ = np.array(blob["scaler"]["min"])
        scaler.scale_ = np.array(blob["scaler"]["scale"])
        out["scaler"] = scaler
    if "imputer" in blob:
        imputer = MedianImputer()
        imputer.fill_ = np.array(blob["imputer"]["fill"])
        out["imputer"] = imputer
    return out


def dumps_model(*args, **kwargs) -> str:
    return json.dumps(model_to_dict(*args, **kwargs), sort_keys=True,
                      separators=(",", ":"))


def save_model(path: str | Path, *args, **kwargs) -> None:
    Path(path).write_text(dumps_model(*args, **kwargs))


def load_model(path: str | Path) -> dict:
    return model_from_dict(json.loads(Path(path).read_text()))
