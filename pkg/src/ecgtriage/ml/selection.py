"""Stratified folds and recursive feature elimination."""

from __future__ import annotations

import numpy as np

from ..errors import StratificationError
from ..utils import derive_seed
from .forest import ForestClassifier


def stratified_kfold(y, folds: int = 5, seed: int = 0
                     ) -> list[tuple[np.ndarray, np.ndarray]]:
    """(train_idx, val_idx) pairs with per-class round-robin dealing,
    so every fold's class counts are within one of an even share.

    When a class has fewer members than requested folds, the fold count
    drops to that size; below two usable folds stratification is
    impossible and the caller gets an error rather than a quiet
    single-class fold.
    """
    y = np.asarray(y)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    effective = min(folds, n_pos, n_neg)
    if effective < 2:
        raise StratificationError(
            f"cannot build {folds} stratified folds from "
            f"{n_pos} positive / {n_neg} negative rows")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(effective)]
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        for i, row in enumerate(idx):
            buckets[i % effective].append(int(row))
    out = []
    all_rows = np.arange(y.size)
    for b in buckets:
        val = np.sort(np.array(b, dtype=np.int64))
        train = np.setdiff1d(all_rows, val)
        out.append((train, val))
    return out


def rfe(X, y, target: int = 9, hyper: dict | None = None, seed: int = 0,
        names: list[str] | None = None) -> list:
    """Recursive feature elimination down to exactly target features.

    Each round fits a forest on the surviving columns and drops the
    single lowest-importance one (first index on ties). The survivors
    come back in their original column order, as names when given,
    otherwise as column indices.
    """
    X = np.asarray(X, dtype=np.float64)
    n_features = X.shape[1]
    if target > n_features:
        raise ValueError(
            f"cannot select {target} features from {n_features}")
    if names is not None and len(names) != n_features:
        raise ValueError("names must match the feature count")
    hyper = dict(hyper or {})
    keep = list(range(n_features))
    step = 0
    while len(keep) > target:
        clf = ForestClassifier(**hyper, seed=derive_seed(seed, "rfe", step))
        clf.fit(X[:, keep], y)
        keep.pop(int(np.argmin(clf.feature_importances_)))
        step += 1
    if names is None:
        return keep
    return [names[i] for i in keep]
