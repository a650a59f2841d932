"""Patient-level model evaluation: splits, feature-set variants, curves.

Every quantity a model sees during training is derived inside the training
side of a split: scaling, imputation, feature elimination and hyperparameter
search all refit per split. Test patients contribute exactly one row each,
their earliest quality-passing hour.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .cohort import META_COLUMNS
from .errors import (
    CohortIntegrityError,
    InsufficientDataError,
    SingleClassError,
    StratificationError,
)
from .features import (
    ECG_FEATURE_NAMES,
    FEATURE_NAMES,
    FeatureRow,
    design_matrix,
    first_passing_hours,
)
from .ml import (
    ForestClassifier,
    MedianImputer,
    MinMaxScaler,
    auroc,
    bayes_search,
    model_from_dict,
    model_to_dict,
    rfe,
)
from .utils import derive_seed

logger = logging.getLogger(__name__)

VARIANT_FEATURES: dict[str, tuple[str, ...]] = {
    "Age": ("Age",),
    "META": tuple(META_COLUMNS),
    "Age+HRV+MOR": ("Age",) + ECG_FEATURE_NAMES,
    "META+HRV+MOR": FEATURE_NAMES,
}
VARIANTS = tuple(VARIANT_FEATURES)


@dataclass(frozen=True)
class PipelineParams:
    """Knobs of the per-split training pipeline."""

    n_trees: int = 300
    rfe_trees: int = 50
    rfe_target: int = 9
    budget: int = 20
    folds: int = 5
    seed: int = 0


@dataclass(frozen=True)
class SplitPlan:
    """Reusable train/test patient assignments."""

    seed: int
    test_frac: float
    splits: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]

    @property
    def n_splits(self) -> int:
        return len(self.splits)


@dataclass(frozen=True)
class SplitResult:
    split: int
    train_auroc: float | None
    test_auroc: float | None
    selected: tuple[str, ...]
    importances: dict[str, float]
    best_params: dict
    test_scores: dict[str, float]
    test_labels: dict[str, int]
    model: dict | None = None
    error: str | None = None


@dataclass(frozen=True)
class VariantReport:
    variant: str
    splits: tuple[SplitResult, ...]

    def _ok(self) -> list[SplitResult]:
        return [r for r in self.splits if r.error is None]

    @property
    def n_failed(self) -> int:
        return len(self.splits) - len(self._ok())

    @property
    def test_aurocs(self) -> list[float]:
        return [r.test_auroc for r in self._ok()]

    @property
    def train_aurocs(self) -> list[float]:
        return [r.train_auroc for r in self._ok()]

    def summary(self) -> dict[str, float]:
        """Mean and spread of AUROC across the usable splits."""
        out = {}
        for side, vals in (("train", self.train_aurocs),
                           ("test", self.test_aurocs)):
            out[f"{side}_mean"] = float(np.mean(vals)) if vals else float("nan")
            out[f"{side}_std"] = (float(np.std(vals, ddof=1))
                                  if len(vals) > 1 else 0.0)
        return out


@dataclass(frozen=True)
class CurvePoint:
    fraction: float
    mean_train_patients: float
    mean_test_auroc: float
    n_splits: int


def patient_labels(rows: list[FeatureRow]) -> dict[str, int]:
    """Per-patient label, insisting it never varies across a patient's rows."""
    labels: dict[str, int] = {}
    for row in rows:
        prev = labels.setdefault(row.patient_id, row.label)
        if prev != row.label:
            raise CohortIntegrityError(
                f"patient {row.patient_id} carries conflicting labels")
    return labels


def make_splits(patients: list[str], labels: dict[str, int],
                n_splits: int = 10, test_frac: float = 1 / 3,
                seed: int = 0) -> SplitPlan:
    """Repeated stratified train/test partitions at the patient level.

    Test-set class counts stay within one patient of the exact class
    proportion (largest-remainder rounding). Raises
    :class:`StratificationError` when either class has fewer than
    three patients.
    """
    if len(set(patients)) != len(patients):
        raise ValueError("duplicate patient ids")
    if not 0.0 < test_frac < 1.0:
        raise ValueError(f"test_frac must lie in (0, 1), got {test_frac}")
    if n_splits < 1:
        raise ValueError("n_splits must be at least 1")
    missing = [p for p in patients if p not in labels]
    if missing:
        raise ValueError(f"no label for patients {missing[:5]}")

    by_class: dict[int, list[str]] = {0: [], 1: []}
    for p in patients:
        by_class[int(labels[p])].append(p)
    for cls, members in by_class.items():
        if len(members) < 3:
            raise StratificationError(
                f"class {cls} has only {len(members)} patients; need >= 3")

    n_test = int(round(len(patients) * test_frac))
    if not 1 <= n_test <= len(patients) - 1:
        raise ValueError("test fraction leaves an empty side")
    exact = {c: len(m) * test_frac for c, m in by_class.items()}
    quota = {c: math.floor(v) for c, v in exact.items()}
    for c in sorted(by_class, key=lambda c: (quota[c] - exact[c], c)):
        if sum(quota.values()) == n_test:
            break
        quota[c] += 1
    for c, members in by_class.items():
        # Never empty a class on either side of the split.
        quota[c] = min(max(quota[c], 1), len(members) - 1)

    splits = []
    for i in range(n_splits):
        rng = np.random.default_rng(derive_seed(seed, "split", i))
        test: list[str] = []
        for c in sorted(by_class):
            members = sorted(by_class[c])
            perm = rng.permutation(len(members))
            test.extend(members[j] for j in perm[:quota[c]])
        test_set = set(test)
        train = tuple(sorted(p for p in patients if p not in test_set))
        splits.append((train, tuple(sorted(test))))
    return SplitPlan(seed=seed, test_frac=test_frac, splits=tuple(splits))


def _run_split(train_rows: list[FeatureRow], test_rows: list[FeatureRow],
               variant: str, params: PipelineParams,
               split_idx: int) -> SplitResult:
    names = VARIANT_FEATURES[variant]
    Xtr, ytr, _ = design_matrix(train_rows, names)
    Xte, yte, te_pids = design_matrix(test_rows, names)
    test_labels = dict(zip(te_pids, (int(v) for v in yte)))
    try:
        scaler = MinMaxScaler().fit(Xtr)
        Xtr_s = scaler.transform(Xtr)
        Xte_s = scaler.transform(Xte)
        imputer = MedianImputer().fit(Xtr_s)
        Xtr_i = imputer.transform(Xtr_s)
        Xte_i = imputer.transform(Xte_s)

        if len(names) > params.rfe_target:
            selected = tuple(rfe(
                Xtr_i, ytr, target=params.rfe_target,
                hyper={"n_trees": params.rfe_trees},
                seed=derive_seed(params.seed, "rfe", variant, split_idx),
                names=list(names)))
        else:
            selected = names
        sel = [names.index(s) for s in selected]

        # The search re-imputes inside each fold; hand it unimputed columns.
        found = bayes_search(
            Xtr_s[:, sel], ytr, folds=params.folds, budget=params.budget,
            seed=derive_seed(params.seed, "search", variant, split_idx),
            n_trees=params.n_trees)

        clf = ForestClassifier(
            n_trees=params.n_trees, seed=derive_seed(
                params.seed, "final", variant, split_idx),
            **found.best)
        clf.fit(Xtr_i[:, sel], ytr)
        train_auroc = auroc(clf.predict_proba(Xtr_i[:, sel])[:, 1], ytr)
        te_scores = clf.predict_proba(Xte_i[:, sel])[:, 1]
        test_auroc = auroc(te_scores, yte)
        importances = {s: float(v)
                       for s, v in zip(selected, clf.feature_importances_)}
        bundle = {
            "kind": "triage-pipeline",
            "variant": variant,
            "split": split_idx,
            "feature_names": list(names),
            **model_to_dict(clf, scaler=scaler, imputer=imputer,
                            features=list(selected)),
        }
        return SplitResult(
            split=split_idx, train_auroc=float(train_auroc),
            test_auroc=float(test_auroc), selected=selected,
            importances=importances, best_params=dict(found.best),
            test_scores={p: float(v) for p, v in zip(te_pids, te_scores)},
            test_labels=test_labels, model=bundle)
    except (SingleClassError, StratificationError,
            InsufficientDataError) as exc:
        logger.warning("split %d of %s failed: %s", split_idx, variant, exc)
        return SplitResult(
            split=split_idx, train_auroc=None, test_auroc=None,
            selected=(), importances={}, best_params={}, test_scores={},
            test_labels=test_labels, error=str(exc))


def _split_rows(rows, train_pids, test_pids):
    train_set, test_set = set(train_pids), set(test_pids)
    train_rows = [r for r in rows if r.patient_id in train_set]
    test_rows = first_passing_hours(
        [r for r in rows if r.patient_id in test_set])
    return train_rows, test_rows


def run_variant(rows: list[FeatureRow], plan: SplitPlan, variant: str,
                params: PipelineParams | None = None) -> VariantReport:
    """Train and score one feature-set variant over every split of a plan.

    A split whose ML stage degenerates (for instance a single-class side)
    is recorded with its error and skipped in the summary, never fatal.
    """
    if variant not in VARIANT_FEATURES:
        raise ValueError(f"unknown variant {variant!r}; "
                         f"expected one of {sorted(VARIANT_FEATURES)}")
    params = params or PipelineParams()
    results = []
    for i, (train_pids, test_pids) in enumerate(plan.splits):
        train_rows, test_rows = _split_rows(rows, train_pids, test_pids)
        results.append(_run_split(train_rows, test_rows, variant, params, i))
    return VariantReport(variant=variant, splits=tuple(results))


def run_experiment(rows: list[FeatureRow], plan: SplitPlan,
                   variants: tuple[str, ...] = VARIANTS,
                   params: PipelineParams | None = None,
                   workers: int = 1) -> dict[str, VariantReport]:
    """Every variant over every split, optionally across worker threads.

    Each (variant, split) job is seeded independently, so the result is
    identical whatever the worker count.
    """
    for v in variants:
        if v not in VARIANT_FEATURES:
            raise ValueError(f"unknown variant {v!r}")
    params = params or PipelineParams()
    jobs = []
    for v in variants:
        for i, (train_pids, test_pids) in enumerate(plan.splits):
            train_rows, test_rows = _split_rows(rows, train_pids, test_pids)
            jobs.append((v, i, train_rows, test_rows))
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(
                lambda j: _run_split(j[2], j[3], j[0], params, j[1]), jobs))
    else:
        done = [_run_split(tr, te, v, params, i) for v, i, tr, te in jobs]
    by_variant: dict[str, list[SplitResult]] = {v: [] for v in variants}
    for (v, _, _, _), res in zip(jobs, done):
        by_variant[v].append(res)
    return {v: VariantReport(variant=v, splits=tuple(by_variant[v]))
            for v in variants}


def score_rows(bundle: dict, rows: list[FeatureRow]) -> dict[str, float]:
    """Apply a serialized pipeline bundle to feature rows, one score each.

    Patients with several rows are scored on their earliest hour, the
    same rule the training pipeline uses for test patients.
    """
    if bundle.get("kind") != "triage-pipeline":
        raise ValueError("not a triage pipeline bundle")
    parts = model_from_dict(bundle)
    names = tuple(bundle["feature_names"])
    use = first_passing_hours(rows)
    X, _, pids = design_matrix(use, names)
    Xs = parts["imputer"].transform(parts["scaler"].transform(X))
    sel = [names.index(s) for s in parts["features"]]
    scores = parts["forest"].predict_proba(Xs[:, sel])[:, 1]
    return {p: float(v) for p, v in zip(pids, scores)}


def learning_curve(rows: list[FeatureRow], plan: SplitPlan, variant: str,
                   fractions: list[float],
                   params: PipelineParams | None = None) -> list[CurvePoint]:
    """Test AUROC as the training side is subsampled patient-wise.

    Fractions leaving fewer than three training patients in either class
    are skipped with a warning. At fraction 1.0 the result reproduces
    :func:`run_variant` exactly.
    """
    if variant not in VARIANT_FEATURES:
        raise ValueError(f"unknown variant {variant!r}")
    params = params or PipelineParams()
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise ValueError(f"fractions must lie in (0, 1], got {f}")

    labels = patient_labels(rows)
    points: list[CurvePoint] = []
    for f in sorted(set(fractions)):
        aurocs: list[float] = []
        sizes: list[int] = []
        viable = True
        for i, (train_pids, test_pids) in enumerate(plan.splits):
            by_class: dict[int, list[str]] = {0: [], 1: []}
            for p in train_pids:
                if p in labels:
                    by_class[labels[p]].append(p)
            keep: list[str] = []
            for c in sorted(by_class):
                members = sorted(by_class[c])
                k = len(members) if f == 1.0 else int(round(len(members) * f))
                if k < 3:
                    viable = False
                    break
                rng = np.random.default_rng(
                    derive_seed(params.seed, "curve", variant, i, f, c))
                perm = rng.permutation(len(members))
                keep.extend(members[j] for j in perm[:k])
            if not viable:
                break
            train_rows, test_rows = _split_rows(rows, keep, test_pids)
            res = _run_split(train_rows, test_rows, variant, params, i)
            if res.error is None:
                aurocs.append(res.test_auroc)
                sizes.append(len(keep))
        if not viable or not aurocs:
            logger.warning(
                "learning-curve fraction %.3g skipped: too few patients", f)
            continue
        points.append(CurvePoint(
            fraction=f, mean_train_patients=float(np.mean(sizes)),
            mean_test_auroc=float(np.mean(aurocs)), n_splits=len(aurocs)))
    return points


def scenario_ppv(scores: dict[str, float], labels: dict[str, int],
                 k: int = 8) -> float:
    """Positive yield when only the top-k scored patients get follow-up.

    Ranking ties break by patient id so the answer never depends on dict
    order. ``k`` must not exceed the number of scored patients.
    """
    if not 1 <= k <= len(scores):
        raise ValueError(f"k must lie in [1, {len(scores)}], got {k}")
    absent = [p for p in scores if p not in labels]
    if absent:
        raise ValueError(f"no label for patients {absent[:5]}")
    order = sorted(scores, key=lambda p: (-scores[p], p))
    top = order[:k]
    return sum(int(labels[p]) for p in top) / k


def improvement(value: float, baseline: float) -> float:
    """Relative gain of ``value`` over ``baseline``: 0.59 means +59 %."""
    if baseline <= 0:
        raise ValueError("baseline must be positive")
    return value / baseline - 1.0
