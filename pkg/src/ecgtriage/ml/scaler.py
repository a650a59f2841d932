"""Feature preprocessing fit on training data only.

Both transformers follow the fit/transform shape: fit learns column
statistics, transform applies them to any matrix with the same columns.
Missing entries are NaN throughout; the scaler passes them through and
the imputer is the single place they get filled.
"""

from __future__ import annotations

import warnings

import numpy as np

from ..errors import NotFittedError


class MinMaxScaler:
    """Maps each training column onto [0, 1].

    Test data is deliberately not clipped, so out-of-range values keep
    their distance from the training envelope. A constant column maps
    to zero (divisor forced to one).
    """

    def __init__(self):
        self.min_: np.ndarray | None = None
        self.scale_: np.ndarray | None = None

    def get_params(self) -> dict:
        return {}

    def fit(self, X) -> "MinMaxScaler":
        X = np.asarray(X, dtype=float)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            self.min_ = np.nanmin(X, axis=0)
            rng = np.nanmax(X, axis=0) - self.min_
        self.min_ = np.where(np.isnan(self.min_), 0.0, self.min_)
        rng = np.where(np.isnan(rng) | (rng == 0.0), 1.0, rng)
        self.scale_ = rng
        return self

    def transform(self, X) -> np.ndarray:
        if self.min_ is None:
            raise NotFittedError("scaler.transform before fit")
        X = np.asarray(X, dtype=float)
        if X.shape[1] != self.min_.size:
            raise ValueError(
                f"expected {self.min_.size} columns, got {X.shape[1]}")
        return (X - self.min_) / self.scale_

    def fit_transform(self, X) -> np.ndarray:
        return self.fit(X).transform(X)


class MedianImputer:
    """Fills NaN with the training-column median (0 if all-missing)."""

    def __init__(self):
        self.fill_: np.ndarray | None = None

    def get_params(self) -> dict:
        return {}

    def fit(self, X) -> "MedianImputer":
        X = np.asarray(X, dtype=float)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            self.fill_ = np.nanmedian(X, axis=0)
        self.fill_ = np.where(np.isnan(self.fill_), 0.0, self.fill_)
        return self

    def transform(self, X) -> np.ndarray:
        if self.fill_ is None:
            raise NotFittedError("imputer.transform before fit")
        X = np.asarray(X, dtype=float).copy()
        if X.shape[1] != self.fill_.size:
            raise ValueError(
                f"expected {self.fill_.size} columns, got {X.shape[1]}")
        holes = np.isnan(X)
        X[holes] = np.broadcast_to(self.fill_, X.shape)[holes]
        return X

    def fit_transform(self, X) -> np.ndarray:
        return self.fit(X).transform(X)
