"""Ranking metric for binary scores."""

from __future__ import annotations

import numpy as np

from ..errors import SingleClassError


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their group mean."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    sv = values[order]
    i = 0
    while i < sv.size:
        j = i
        while j + 1 < sv.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative,
    counting ties as half. Equivalent to the Mann-Whitney U statistic
    normalized by the number of positive-negative pairs."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError(
            f"need both classes, got {n_pos} positive / {n_neg} negative")
    ranks = _average_ranks(scores)
    u = float(np.sum(ranks[labels == 1])) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)
