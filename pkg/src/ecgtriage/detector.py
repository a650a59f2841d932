"""Heart-rate seizure detector with two operating points.

Both variants compare instantaneous heart rate against a trailing
baseline: the sensitive one fires on any beat more than 15% above
baseline, the strict one requires 30% above baseline sustained for at
least five seconds. A run of consecutive firing beats collapses into a
single detection stamped at the run onset, and the detector re-arms
only once the rate falls back below threshold.

Detections in low-quality windows are flagged rather than dropped, so
the cost of the quality gate stays visible in the counts.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .cohort import SeizureEvent
from .errors import InsufficientDataError
from .preprocess import NnSeries
from .quality import SqiSeries

OSORIO_MODES = ("osorio15", "osorio30")

#: Trailing window for the moving-median baseline, seconds.
BASELINE_WINDOW_S = 120.0

_THRESH_FACTOR = {"osorio15": 1.15, "osorio30": 1.30}
_SUSTAIN_S = {"osorio15": 0.0, "osorio30": 5.0}


@dataclass(frozen=True)
class Detection:
    """One alarm: onset time, operating mode, quality-gate flag."""

    t_s: float
    mode: str
    suppressed: bool = False

    def __post_init__(self):
        if self.mode not in OSORIO_MODES:
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class EventMatchReport:
    """Event-level confusion counts for one detector mode.

    tp counts references detected (each credited once), so tp + fn is
    always the reference count and se = tp / (tp + fn). ppv credits
    every detection that lands inside some reference window, so
    repeated alarms during one long seizure do not count against
    precision: ppv = matched_detections / (matched_detections + fp).
    Both rates are None when their denominator is empty.
    """

    tp: int
    fp: int
    fn: int
    se: float | None
    ppv: float | None
    matched_detections: int


def _weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(values, kind="stable")
    v, w = values[order], weights[order]
    cum = np.cumsum(w)
    return float(v[np.searchsorted(cum, 0.5 * cum[-1])])


def baseline_hr(nn: NnSeries, window_s: float = BASELINE_WINDOW_S) -> np.ndarray:
    """Trailing moving-median heart rate, one value per beat.

    The median weights each beat by its interval length, so the lag of
    a rate step is governed by elapsed time, not beat count: after a
    jump the baseline holds the old rate until the new rhythm has
    occupied half the window.
    """
    t = nn.t_s
    if t.size < 2 or t[-1] - t[0] < window_s:
        raise InsufficientDataError(
            f"baseline needs {window_s:.0f} s of beats, "
            f"got {0.0 if t.size == 0 else t[-1] - t[0]:.1f} s")
    hr = 60e3 / nn.nn_ms
    out = np.empty(t.size)
    left = 0
    for i in range(t.size):
        while t[left] <= t[i] - window_s:
            left += 1
        out[i] = _weighted_median(hr[left:i + 1], nn.nn_ms[left:i + 1])
    return out


def osorio_detect(nn: NnSeries, mode: str,
                  window_s: float = BASELINE_WINDOW_S) -> list[Detection]:
    """All alarms for one mode over a beat series."""
    if mode not in OSORIO_MODES:
        raise ValueError(f"unknown mode {mode!r}")
    base = baseline_hr(nn, window_s=window_s)
    hr = 60e3 / nn.nn_ms
    above = hr > _THRESH_FACTOR[mode] * base
    sustain = _SUSTAIN_S[mode]
    t = nn.t_s

    detections: list[Detection] = []
    i = 0
    n = above.size
    while i < n:
        if not above[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and above[j + 1]:
            j += 1
        if t[j] - t[i] >= sustain:
            detections.append(Detection(t_s=float(t[i]), mode=mode))
        i = j + 1
    return detections


def sqi_suppress(detections: list[Detection], sqi: SqiSeries,
                 thresh: float = 0.8) -> list[Detection]:
    """Flag detections whose containing quality window falls below
    thresh. Count is preserved; only the suppressed bit changes."""
    out = []
    for d in detections:
        v = sqi.value_at(d.t_s)
        out.append(replace(d, suppressed=bool(v < thresh)))
    return out


def match_events(detections: list[Detection],
                 references: list[SeizureEvent],
                 pre_s: float = 60.0, post_s: float = 60.0) -> EventMatchReport:
    """Score unsuppressed detections against reference events.

    A detection matches a reference when it falls within pre_s before
    its start through post_s after its end.
    """
    active = [d for d in detections if not d.suppressed]
    credited = np.zeros(len(references), dtype=bool)
    matched_det = 0
    fp = 0
    for d in active:
        hit = False
        for k, ref in enumerate(references):
            if ref.t_start_s - pre_s <= d.t_s <= ref.t_end_s + post_s:
                hit = True
                credited[k] = True
        if hit:
            matched_det += 1
        else:
            fp += 1
    tp = int(credited.sum())
    fn = len(references) - tp
    se = tp / (tp + fn) if references else None
    ppv = matched_det / (matched_det + fp) if active else None
    return EventMatchReport(tp=tp, fp=fp, fn=fn, se=se, ppv=ppv,
                            matched_detections=matched_det)


def detection_table(reports: dict[str, EventMatchReport]) -> str:
    """CSV with one row per mode: mode, TP, FP, FN, Se, PPV."""
    lines = ["mode,TP,FP,FN,Se,PPV"]
    for mode in OSORIO_MODES:
        if mode not in reports:
            continue
        r = reports[mode]
        se = "" if r.se is None else f"{r.se:.3f}"
        ppv = "" if r.ppv is None else f"{r.ppv:.3f}"
        lines.append(f"{mode},{r.tp},{r.fp},{r.fn},{se},{ppv}")
    return "\n".join(lines) + "\n"
