"""Beat-level signal quality from the agreement of two independent detectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cohort import EcgRecord
from .preprocess import BeatSeries

DEFAULT_AGREE_MS = 50.0
DEFAULT_WINDOW_S = 60.0
HOUR_GATE = 0.8


@dataclass
class SqiSeries:
    """Per-window quality values tiling a record from its start."""

    values: np.ndarray
    window_s: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.any((self.values < 0) | (self.values > 1)):
            raise ValueError("SQI values must lie in [0, 1]")

    def window_of(self, t_s: float) -> int:
        return int(t_s // self.window_s)

    def value_at(self, t_s: float) -> float:
        idx = self.window_of(t_s)
        if 0 <= idx < self.values.size:
            return float(self.values[idx])
        return float("nan")


def matched_count(a_s: np.ndarray, b_s: np.ndarray, agree_s: float) -> int:
    """One-to-one matches between two sorted peak-time arrays within a
    tolerance, greedily pairing each peak with the earliest available partner.
    For 1-D tolerance matching this greedy is maximal."""
    i = j = matched = 0
    while i < a_s.size and j < b_s.size:
        d = a_s[i] - b_s[j]
        if abs(d) <= agree_s:
            matched += 1
            i += 1
            j += 1
        elif d > 0:
            j += 1
        else:
            i += 1
    return matched


def bsqi(beats_a: BeatSeries, beats_b: BeatSeries,
         agree_ms: float = DEFAULT_AGREE_MS) -> float:
    """Agreement index n_match / (n_a + n_b - n_match) in [0, 1].

    Two empty inputs mean "nothing to disagree about" and score 1.0.
    """
    n_a, n_b = len(beats_a), len(beats_b)
    if n_a == 0 and n_b == 0:
        return 1.0
    m = matched_count(np.sort(beats_a.t_s), np.sort(beats_b.t_s), agree_ms / 1e3)
    return m / (n_a + n_b - m)


def windowed_sqi(record: EcgRecord, beats_a: BeatSeries, beats_b: BeatSeries,
                 window_s: float = DEFAULT_WINDOW_S,
                 agree_ms: float = DEFAULT_AGREE_MS) -> SqiSeries:
    """bsqi per consecutive window tiling the record.

    A window with no peaks from either detector scores 1.0; peaks split by a
    window edge are judged within their own windows.
    """
    n_win = int(np.ceil(record.duration_s / window_s))
    t_a = beats_a.t_s
    t_b = beats_b.t_s
    values = np.empty(max(n_win, 0))
    for w in range(n_win):
        lo, hi = w * window_s, (w + 1) * window_s
        a = t_a[(t_a >= lo) & (t_a < hi)]
        b = t_b[(t_b >= lo) & (t_b < hi)]
        if a.size == 0 and b.size == 0:
            values[w] = 1.0
            continue
        m = matched_count(a, b, agree_ms / 1e3)
        values[w] = m / (a.size + b.size - m)
    return SqiSeries(values=values, window_s=window_s)


def hour_quality_gate(sqi: SqiSeries, gate: float = HOUR_GATE) -> bool:
    """True iff the mean SQI over the hour's windows reaches the gate."""
    if sqi.values.size == 0:
        return False
    return bool(np.mean(sqi.values) >= gate)
