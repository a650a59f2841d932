"""ECG preprocessing: band-pass filtering, R-peak detection, NN filtering.

Two algorithmically independent R detectors are kept on purpose: their
disagreement is what the signal-quality index measures downstream, so they
must never share a code path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter1d
from scipy.signal import butter, sosfiltfilt

from .cohort import EcgRecord
from .errors import TooShortRecordError

logger = logging.getLogger(__name__)

BAND_HZ = (3.0, 45.0)
FILTER_ORDER = 5
REFRACTORY_S = 0.150
_EDGE_PAD_S = 1.0


@dataclass
class BeatSeries:
    """Detected R peaks of one record, as sample indices."""

    r_samples: np.ndarray
    fs: float

    def __post_init__(self):
        self.r_samples = np.asarray(self.r_samples, dtype=np.int64)
        if self.r_samples.size > 1 and np.any(np.diff(self.r_samples) <= 0):
            raise ValueError("r_samples must be strictly increasing")

    @property
    def t_s(self) -> np.ndarray:
        return self.r_samples / self.fs

    @property
    def rr_ms(self) -> np.ndarray:
        return np.diff(self.r_samples) / self.fs * 1e3

    def __len__(self) -> int:
        return int(self.r_samples.size)


@dataclass
class NnSeries:
    """Normal-to-normal intervals surviving the RR filters.

    ``t_s`` is the end time of each retained interval relative to record
    start; gaps where intervals were dropped stay visible to the spectral
    estimator through these timestamps.
    """

    nn_ms: np.ndarray
    t_s: np.ndarray
    keep_mask: np.ndarray

    def __post_init__(self):
        self.nn_ms = np.asarray(self.nn_ms, dtype=np.float64)
        self.t_s = np.asarray(self.t_s, dtype=np.float64)
        self.keep_mask = np.asarray(self.keep_mask, dtype=bool)
        if self.nn_ms.size != self.t_s.size:
            raise ValueError("nn_ms and t_s must align")
        if int(self.keep_mask.sum()) != self.nn_ms.size:
            raise ValueError("keep_mask must select exactly the retained intervals")

    def __len__(self) -> int:
        return int(self.nn_ms.size)


@dataclass
class NnFilterConfig:
    rr_min_ms: float = 300.0
    rr_max_ms: float = 1500.0
    ma_window_beats: int = 10
    ma_max_dev: float = 0.20
    q_lo: float = 0.8
    q_hi: float = 1.25


def bandpass(record: EcgRecord, band_hz: tuple[float, float] = BAND_HZ,
             order: int = FILTER_ORDER) -> EcgRecord:
    """Zero-phase Butterworth band-pass with 1 s reflected edge padding.

    Requires fs > 2 * upper cutoff so the passband fits under Nyquist.
    """
    lo, hi = band_hz
    if record.fs <= 2 * hi:
        raise ValueError(f"fs={record.fs} too low for a {lo}-{hi} Hz band-pass")
    x = record.samples_mv
    pad = min(int(round(_EDGE_PAD_S * record.fs)), x.size - 1)
    sos = butter(order, [lo, hi], btype="bandpass", fs=record.fs, output="sos")
    if pad > 0:
        ext = np.concatenate([x[pad:0:-1], x, x[-2:-pad - 2:-1]])
        y = sosfiltfilt(sos, ext, padtype=None)[pad:pad + x.size]
    else:
        y = sosfiltfilt(sos, x, padtype=None)
    return EcgRecord(record.patient_id, record.segment_id, record.fs,
                     record.start_offset_s, y)


def _trailing_max(x: np.ndarray, width: int) -> np.ndarray:
    """max(x[i-width+1 : i+1]) per sample."""
    width = min(width, x.size)
    # shift the centered window so it ends at the current sample
    return maximum_filter1d(x, size=width, mode="nearest", origin=(width - 1) // 2)


def detect_rpeaks_primary(record: EcgRecord, threshold: float = 0.5,
                          refractory_s: float = REFRACTORY_S,
                          integration_window_s: float = 0.080,
                          expected_hr_bpm: float = 100.0,
                          envelope_horizon_s: float = 3.0) -> BeatSeries:
    """Energy-envelope R detector on a band-passed record.

    Squared derivative, moving-window integration, then an adaptive threshold
    at ``threshold`` (normalized units) of the running envelope maximum over
    the trailing ``envelope_horizon_s``. The integration window scales
    inversely with the expected HR. Candidates closer than the refractory
    period collapse to the strongest one.
    """
    fs = record.fs
    x = record.samples_mv
    if x.size < int(2.0 * fs):
        raise TooShortRecordError(
            f"need >= 2 s of signal, got {x.size / fs:.2f} s")
    win = max(3, int(round(integration_window_s * (100.0 / expected_hr_bpm) * fs)))
    deriv = np.diff(x)
    energy = deriv * deriv
    env = np.convolve(energy, np.ones(win) / win, mode="same")
    hor = min(int(envelope_horizon_s * fs), env.size)
    run_max = _trailing_max(env, hor)
    # warm start: before one full horizon the trailing max has not seen a
    # QRS yet and P waves would trigger
    run_max[:hor] = np.maximum(run_max[:hor], env[:hor].max())
    thr = threshold * run_max
    above = env > thr
    # local maxima of the envelope inside above-threshold stretches
    rising = np.flatnonzero(above[1:] & ~above[:-1]) + 1
    falling = np.flatnonzero(~above[1:] & above[:-1]) + 1
    if above[0]:
        rising = np.concatenate([[0], rising])
    if above[-1]:
        falling = np.concatenate([falling, [above.size]])
    refr = int(round(refractory_s * fs))
    cand: list[tuple[int, float]] = []
    for i0, i1 in zip(rising, falling):
        seg = env[i0:i1]
        peak = i0 + int(np.argmax(seg))
        cand.append((peak, float(env[peak])))
    # map envelope peaks onto the dominant |signal| extremum nearby
    peaks: list[tuple[int, float]] = []
    absx = np.abs(x)
    for c, strength in cand:
        a = max(0, c - win)
        b = min(x.size, c + win + 1)
        peaks.append((a + int(np.argmax(absx[a:b])), strength))
    peaks.sort()
    kept: list[tuple[int, float]] = []
    for p, s in peaks:
        if kept and p - kept[-1][0] < refr:
            if s > kept[-1][1]:
                kept[-1] = (p, s)
        else:
            kept.append((p, s))
    r = np.array(sorted({p for p, _ in kept}), dtype=np.int64)
    return BeatSeries(r_samples=r, fs=fs)


def refine_rpeaks(record_raw: EcgRecord, beats: BeatSeries,
                  window_s: float = 0.025) -> BeatSeries:
    """Move each peak to the dominant-polarity extremum of the raw signal
    within +/- ``window_s``. Polarity is the sign of the median raw peak
    amplitude (against the record median), so inverted leads refine toward
    minima. Ordering and the refractory gap are preserved; collisions keep
    the larger-amplitude peak.
    """
    if len(beats) == 0:
        return BeatSeries(r_samples=np.array([], dtype=np.int64), fs=beats.fs)
    x = record_raw.samples_mv
    fs = record_raw.fs
    w = int(round(window_s * fs))
    baseline = float(np.median(x))
    polarity = np.median(x[beats.r_samples] - baseline)
    take_max = polarity >= 0
    refined = np.empty(len(beats), dtype=np.int64)
    for i, p in enumerate(beats.r_samples):
        a = max(0, p - w)
        b = min(x.size, p + w + 1)
        seg = x[a:b]
        refined[i] = a + (int(np.argmax(seg)) if take_max else int(np.argmin(seg)))
    refined = np.unique(refined)
    refr = int(round(REFRACTORY_S * fs))
    amp = np.abs(x[refined] - baseline)
    kept: list[int] = []
    for i, p in enumerate(refined):
        if kept and p - kept[-1] < refr:
            if amp[i] > np.abs(x[kept[-1]] - baseline):
                kept[-1] = int(p)
        else:
            kept.append(int(p))
    return BeatSeries(r_samples=np.array(kept, dtype=np.int64), fs=fs)


def _matched_kernel(fs: float, width_s: float = 0.028) -> np.ndarray:
    """Zero-mean raised-cosine probe the width of a QRS complex."""
    half = max(2, int(round(width_s * fs / 2)))
    t = np.arange(-half, half + 1) / fs
    k = 0.5 * (1.0 + np.cos(np.pi * t / (half / fs)))
    k -= k.mean()
    return k / np.sqrt(np.sum(k * k))


def detect_rpeaks_secondary(record: EcgRecord, threshold: float = 0.35,
                            refractory_s: float = 0.250,
                            percentile: float = 98.0,
                            horizon_s: float = 5.0) -> BeatSeries:
    """Matched-filter R detector, independent of the energy-envelope one.

    Correlates the band-passed signal with a QRS-width probe and thresholds
    the squared response at ``threshold`` times a trailing high percentile.
    Parameters deliberately differ from the primary detector.
    """
    fs = record.fs
    x = record.samples_mv
    if x.size < int(2.0 * fs):
        raise TooShortRecordError(
            f"need >= 2 s of signal, got {x.size / fs:.2f} s")
    kern = _matched_kernel(fs)
    resp = np.convolve(x, kern[::-1], mode="same")
    score = resp * resp
    hor = min(int(horizon_s * fs), score.size)
    # trailing percentile on a coarse grid; fine enough for an adaptive floor
    step = max(1, hor // 8)
    grid_idx = np.arange(0, score.size, step)
    ref = np.empty(grid_idx.size)
    for gi, g in enumerate(grid_idx):
        a = max(0, g - hor)
        b = max(g + 1, min(hor, score.size))  # warm start over the first horizon
        ref[gi] = np.percentile(score[a:b], percentile)
    floor = np.repeat(ref, step)[:score.size]
    thr = threshold * floor
    above = score > thr
    rising = np.flatnonzero(above[1:] & ~above[:-1]) + 1
    falling = np.flatnonzero(~above[1:] & above[:-1]) + 1
    if above[0]:
        rising = np.concatenate([[0], rising])
    if above[-1]:
        falling = np.concatenate([falling, [above.size]])
    refr = int(round(refractory_s * fs))
    kept: list[tuple[int, float]] = []
    for i0, i1 in zip(rising, falling):
        p = i0 + int(np.argmax(score[i0:i1]))
        s = float(score[p])
        if kept and p - kept[-1][0] < refr:
            if s > kept[-1][1]:
                kept[-1] = (p, s)
        else:
            kept.append((p, s))
    r = np.array([p for p, _ in kept], dtype=np.int64)
    return BeatSeries(r_samples=r, fs=fs)


def filter_nn(beats: BeatSeries, cfg: NnFilterConfig | None = None) -> NnSeries:
    """RR to NN filtering: range gate, moving-average gate, quotient gate.

    An interval is dropped when it leaves [rr_min, rr_max], deviates more
    than ``ma_max_dev`` from the centered moving average of
    ``ma_window_beats`` intervals, or its ratio against the last retained
    interval leaves [q_lo, q_hi]. Disabling any gate only grows the output.
    """
    cfg = cfg or NnFilterConfig()
    rr = beats.rr_ms
    t_end = beats.t_s[1:] if len(beats) > 1 else np.array([])
    n = rr.size
    if n == 0:
        return NnSeries(nn_ms=np.array([]), t_s=np.array([]),
                        keep_mask=np.array([], dtype=bool))

    # each gate judges the raw RR sequence on its own; the final mask is
    # their conjunction, which keeps per-gate relaxation monotone
    range_ok = (rr >= cfg.rr_min_ms) & (rr <= cfg.rr_max_ms)

    kernel = np.ones(cfg.ma_window_beats)
    start = (cfg.ma_window_beats - 1) // 2
    sums = np.convolve(rr, kernel, mode="full")[start:start + n]
    counts = np.convolve(np.ones(n), kernel, mode="full")[start:start + n]
    ma = sums / counts
    with np.errstate(divide="ignore", invalid="ignore"):
        dev = np.abs(rr - ma) / ma
    ma_ok = dev <= cfg.ma_max_dev

    # quotient gate: an interval is dropped when its ratio against the gate's
    # own last retained interval falls outside the band, so one spike costs
    # one interval, not its whole neighborhood
    q_ok = np.ones(n, dtype=bool)
    last_kept: float | None = None
    for i in range(n):
        if last_kept is not None:
            q = rr[i] / last_kept
            if not (cfg.q_lo <= q <= cfg.q_hi):
                q_ok[i] = False
                continue
        last_kept = rr[i]

    keep = range_ok & ma_ok & q_ok
    nn = rr[keep]
    logger.debug("filter_nn kept %d/%d intervals", nn.size, n)
    return NnSeries(nn_ms=nn, t_s=t_end[keep], keep_mask=keep)
