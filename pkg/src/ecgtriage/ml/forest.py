"""Bagged CART forest for binary classification.

Trees are grown depth-first on bootstrap resamples, choosing at every
node the best midpoint threshold among a random feature subset by gini
or entropy gain. Exact ties go to the lowest feature index, then the
lowest threshold, so a fit is reproducible across platforms. All
randomness (bootstrap counts and per-node feature subsets) is drawn up
front from the seed, never from row memory layout.

The split search works on presorted column orders with per-row
bootstrap multiplicities, so one fit costs O(trees * nodes * n * k)
with no re-sorting.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..errors import NotFittedError

CRITERIA = ("gini", "entropy")

#: minimum impurity-gain for a split to stand; guards float dust
_MIN_GAIN = 1e-12


@njit(cache=True)
def _impurity(p: float, crit_id: int) -> float:
    if crit_id == 0:
        return 2.0 * p * (1.0 - p)
    out = 0.0
    if p > 0.0:
        out -= p * np.log2(p)
    if p < 1.0:
        out -= (1.0 - p) * np.log2(1.0 - p)
    return out


@njit(cache=True)
def _fit_forest_kernel(X, y, order, boot_counts, subsets, max_depth,
                       crit_id, node_feat, node_thr, node_left,
                       node_right, node_proba, node_n, imp_out):
    n_trees = boot_counts.shape[0]
    n = X.shape[0]
    stack_node = np.empty(4 * (max_depth + 2), dtype=np.int64)
    stack_depth = np.empty(4 * (max_depth + 2), dtype=np.int64)
    stack_buf = np.empty((4 * (max_depth + 2), n), dtype=np.int64)
    counts = np.empty(n, dtype=np.int64)
    left_counts = np.empty(n, dtype=np.int64)
    right_counts = np.empty(n, dtype=np.int64)
    k = subsets.shape[2]
    max_slot = subsets.shape[1] - 1

    for t in range(n_trees):
        stack_node[0] = 0
        stack_depth[0] = 0
        stack_buf[0] = boot_counts[t]
        top = 1
        n_nodes = 1
        n_internal = 0
        root_m = 0
        for r in range(n):
            root_m += boot_counts[t, r]
        while top > 0:
            top -= 1
            nid = stack_node[top]
            depth = stack_depth[top]
            counts[:] = stack_buf[top]
            m = 0
            pos = 0.0
            for r in range(n):
                c = counts[r]
                if c > 0:
                    m += c
                    pos += c * y[r]
            p = pos / m
            node_proba[t, nid] = p
            node_n[t, nid] = m
            if depth >= max_depth or m < 2 or pos == 0.0 or pos == m:
                continue
            imp_parent = _impurity(p, crit_id)
            best_w = np.inf
            best_feat = -1
            best_thr = 0.0
            best_gl = 0.0
            best_gr = 0.0
            slot = n_internal if n_internal < max_slot else max_slot
            for jj in range(k):
                j = subsets[t, slot, jj]
                nL = 0
                posL = 0.0
                last_val = 0.0
                have_last = False
                for i in range(n):
                    r = order[i, j]
                    c = counts[r]
                    if c == 0:
                        continue
                    v = X[r, j]
                    if have_last and v > last_val and nL > 0:
                        nR = m - nL
                        gl = _impurity(posL / nL, crit_id)
                        gr = _impurity((pos - posL) / nR, crit_id)
                        w = (nL * gl + nR * gr) / m
                        if w < best_w - 1e-15:
                            best_w = w
                            best_feat = j
                            best_thr = 0.5 * (last_val + v)
                            best_gl = gl
                            best_gr = gr
                    nL += c
                    posL += c * y[r]
                    last_val = v
                    have_last = True
            if best_feat < 0 or imp_parent - best_w <= _MIN_GAIN:
                continue
            mL = 0
            for r in range(n):
                c = counts[r]
                if c > 0 and X[r, best_feat] <= best_thr:
                    left_counts[r] = c
                    right_counts[r] = 0
                    mL += c
                else:
                    left_counts[r] = 0
                    right_counts[r] = c
            mR = m - mL
            node_feat[t, nid] = best_feat
            node_thr[t, nid] = best_thr
            imp_out[best_feat] += (m * imp_parent - mL * best_gl
                                   - mR * best_gr) / root_m
            node_left[t, nid] = n_nodes
            node_right[t, nid] = n_nodes + 1
            stack_node[top] = n_nodes + 1
            stack_depth[top] = depth + 1
            stack_buf[top] = right_counts
            top += 1
            stack_node[top] = n_nodes
            stack_depth[top] = depth + 1
            stack_buf[top] = left_counts
            top += 1
            n_nodes += 2
            n_internal += 1


class ForestClassifier:
    """Random forest with the fit/predict estimator surface.

    Fitted attributes carry the trailing underscore: trees_ (flat node
    arrays), feature_importances_ (normalized mean impurity decrease),
    n_features_, single_class_.
    """

    def __init__(self, n_trees: int = 300, depth: int = 3,
                 criterion: str = "gini", feature_fraction: float = 1.0,
                 seed: int = 0):
        self.n_trees = n_trees
        self.depth = depth
        self.criterion = criterion
        self.feature_fraction = feature_fraction
        self.seed = seed

    def get_params(self) -> dict:
        return {"n_trees": self.n_trees, "depth": self.depth,
                "criterion": self.criterion,
                "feature_fraction": self.feature_fraction,
                "seed": self.seed}

    def set_params(self, **params) -> "ForestClassifier":
        known = self.get_params()
        for key, value in params.items():
            if key not in known:
                raise ValueError(f"unknown parameter {key!r}")
            setattr(self, key, value)
        return self

    def _validate(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}")
        if not 0.0 < self.feature_fraction <= 1.0:
            raise ValueError("feature_fraction must lie in (0, 1]")
        if self.depth < 1 or self.n_trees < 1:
            raise ValueError("depth and n_trees must be positive")

    def fit(self, X, y) -> "ForestClassifier":
        self._validate()
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim != 2 or X.shape[0] != y.size or X.shape[0] == 0:
            raise ValueError("X must be (n, f) with one label per row")
        if np.isnan(X).any():
            raise ValueError("impute missing values before fit")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0/1")
        yf = y.astype(np.float64)
        n, f = X.shape
        self.single_class_ = bool(np.unique(y).size < 2)

        k = int(np.ceil(self.feature_fraction * f))
        max_internal = 2 ** self.depth - 1
        max_nodes = 2 ** (self.depth + 1) - 1
        order = np.argsort(X, axis=0, kind="stable").astype(np.int64)

        rng = np.random.default_rng(self.seed)
        boot = np.empty((self.n_trees, n), dtype=np.int64)
        subsets = np.empty((self.n_trees, max_internal, k), dtype=np.int64)
        for t in range(self.n_trees):
            boot[t] = np.bincount(rng.integers(0, n, n), minlength=n)
            if k == f:
                subsets[t] = np.arange(f, dtype=np.int64)
            else:
                draws = np.argsort(rng.random((max_internal, f)),
                                   axis=1)[:, :k]
                draws.sort(axis=1)
                subsets[t] = draws

        shape = (self.n_trees, max_nodes)
        node_feat = np.full(shape, -1, dtype=np.int64)
        node_thr = np.zeros(shape)
        node_left = np.full(shape, -1, dtype=np.int64)
        node_right = np.full(shape, -1, dtype=np.int64)
        node_proba = np.zeros(shape)
        node_n = np.zeros(shape, dtype=np.int64)
        imp = np.zeros(f)
        _fit_forest_kernel(X, yf, order, boot, subsets, self.depth,
                           CRITERIA.index(self.criterion), node_feat,
                           node_thr, node_left, node_right, node_proba,
                           node_n, imp)
        self.trees_ = {"feat": node_feat, "thr": node_thr,
                       "left": node_left, "right": node_right,
                       "proba": node_proba, "n": node_n}
        imp /= self.n_trees
        total = imp.sum()
        self.feature_importances_ = imp / total if total > 0 else imp
        self.n_features_ = f
        return self

    def _scores(self, X) -> np.ndarray:
        if not hasattr(self, "trees_"):
            raise NotFittedError("predict before fit")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_:
            raise ValueError(
                f"expected {self.n_features_} features, got shape {X.shape}")
        feat, thr = self.trees_["feat"], self.trees_["thr"]
        left, right = self.trees_["left"], self.trees_["right"]
        proba = self.trees_["proba"]
        acc = np.zeros(X.shape[0])
        for t in range(feat.shape[0]):
            cur = np.zeros(X.shape[0], dtype=np.int64)
            for _ in range(self.depth):
                f_id = feat[t, cur]
                live = f_id >= 0
                if not live.any():
                    break
                go_left = np.zeros_like(live)
                go_left[live] = (X[live, f_id[live]]
                                 <= thr[t, cur[live]])
                nxt = np.where(go_left, left[t, cur], right[t, cur])
                cur = np.where(live, nxt, cur)
            acc += proba[t, cur]
        return acc / feat.shape[0]

    def predict_proba(self, X) -> np.ndarray:
        pos = self._scores(X)
        return np.column_stack([1.0 - pos, pos])

    def predict(self, X) -> np.ndarray:
        return (self._scores(X) > 0.5).astype(np.int64)
