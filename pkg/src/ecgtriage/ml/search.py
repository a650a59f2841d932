"""Sequential model-based hyperparameter search.

The space is tiny (two depths, two criteria, ten feature fractions) but
the search still follows the surrogate recipe: seed with a handful of
random configurations, fit a Gaussian-process regression of the
cross-validated AUROC over normalized config coordinates, and spend the
remaining budget on expected-improvement proposals. The winner is the
best observed configuration, never a surrogate extrapolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from ..utils import derive_seed
from .forest import ForestClassifier
from .metrics import auroc
from .scaler import MedianImputer
from .selection import stratified_kfold

#: RBF length scale over coordinates normalized to about unit range.
_GP_LENGTH = 0.5
_GP_NOISE = 0.1
_EI_XI = 0.01


@dataclass(frozen=True)
class SearchSpace:
    depths: tuple[int, ...] = (2, 3)
    criteria: tuple[str, ...] = ("gini", "entropy")
    fractions: tuple[float, ...] = tuple(round(0.1 * k, 1)
                                         for k in range(1, 11))

    def configs(self) -> list[dict]:
        return [{"depth": d, "criterion": c, "feature_fraction": f}
                for d in self.depths
                for c in self.criteria
                for f in self.fractions]

    def coords(self) -> np.ndarray:
        """Configs embedded in [0,1]^3 for the surrogate."""
        pts = []
        for cfg in self.configs():
            pts.append([
                self.depths.index(cfg["depth"]) / max(1, len(self.depths) - 1),
                self.criteria.index(cfg["criterion"])
                / max(1, len(self.criteria) - 1),
                cfg["feature_fraction"],
            ])
        return np.array(pts)


@dataclass
class BayesResult:
    best: dict
    best_score: float
    history: list[tuple[dict, float]] = field(default_factory=list)


def _cv_score(X, y, folds, cfg: dict, n_trees: int, seed: int,
              cfg_id: int) -> float:
    scores = []
    for k, (tr, va) in enumerate(folds):
        imputer = MedianImputer().fit(X[tr])
        clf = ForestClassifier(n_trees=n_trees,
                               seed=derive_seed(seed, "cv", cfg_id, k),
                               **cfg)
        clf.fit(imputer.transform(X[tr]), y[tr])
        scores.append(auroc(clf.predict_proba(imputer.transform(X[va]))[:, 1],
                            y[va]))
    return float(np.mean(scores))


def _gp_posterior(X_obs, y_obs, X_new):
    d2 = np.sum((X_obs[:, None, :] - X_obs[None, :, :]) ** 2, axis=-1)
    K = np.exp(-d2 / (2.0 * _GP_LENGTH ** 2))
    K[np.diag_indices_from(K)] += _GP_NOISE ** 2
    d2n = np.sum((X_new[:, None, :] - X_obs[None, :, :]) ** 2, axis=-1)
    Ks = np.exp(-d2n / (2.0 * _GP_LENGTH ** 2))
    alpha = np.linalg.solve(K, y_obs)
    mu = Ks @ alpha
    v = np.linalg.solve(K, Ks.T)
    var = 1.0 + _GP_NOISE ** 2 - np.sum(Ks * v.T, axis=1)
    return mu, np.sqrt(np.clip(var, 1e-12, None))


def _expected_improvement(mu, sd, best):
    z = (mu - best - _EI_XI) / sd
    pdf = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    return (mu - best - _EI_XI) * ndtr(z) + sd * pdf


def bayes_search(X, y, space: SearchSpace | None = None, folds: int = 5,
                 budget: int = 20, seed: int = 0,
                 n_trees: int = 300) -> BayesResult:
    """Best hyperparameters by CV AUROC within an evaluation budget."""
    if budget < 5:
        raise ValueError("budget must be at least 5 evaluations")
    space = space or SearchSpace()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    configs = space.configs()
    coords = space.coords()
    fold_plan = stratified_kfold(y, folds=folds,
                                 seed=derive_seed(seed, "folds"))

    n_evals = min(budget, len(configs))
    rng = np.random.default_rng(derive_seed(seed, "proposals"))
    n_init = min(n_evals, max(4, budget // 4))
    pending = list(rng.permutation(len(configs))[:n_init])

    tried: list[int] = []
    scores: list[float] = []
    history: list[tuple[dict, float]] = []
    while len(tried) < n_evals:
        if pending:
            cand = pending.pop(0)
        else:
            remaining = np.setdiff1d(np.arange(len(configs)), tried)
            mu, sd = _gp_posterior(
                coords[tried],
                (np.array(scores) - np.mean(scores))
                / (np.std(scores) + 1e-12),
                coords[remaining])
            best_std = (max(scores) - np.mean(scores)) \
                / (np.std(scores) + 1e-12)
            cand = int(remaining[np.argmax(
                _expected_improvement(mu, sd, best_std))])
        score = _cv_score(X, y, fold_plan, configs[cand], n_trees, seed,
                          cand)
        tried.append(cand)
        scores.append(score)
        history.append((dict(configs[cand]), score))
    best_i = int(np.argmax(scores))
    return BayesResult(best=dict(configs[tried[best_i]]),
                       best_score=scores[best_i], history=history)
