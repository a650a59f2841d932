"""Wavelet ECG delineation: per-beat P/QRS/T fiducials.

Dyadic (a trous) wavelet transform with a quadratic-spline prototype;
the detail signal at scale 2^k behaves like a smoothed derivative, so
wave slopes appear as modulus maxima and wave peaks as zero crossings
between opposite-signed maxima. QRS boundaries are read at scale 2^2,
P and T waves at 2^4. Every threshold is a fraction of a local modulus
maximum, which keeps delineation invariant to gain and polarity.

Absence of a wave is data, not an error: fiducials of undetected waves
are NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import resample_poly

from .cohort import EcgRecord
from .preprocess import BeatSeries

#: Canonical per-beat fiducial columns, in temporal order.
FIDUCIAL_COLUMNS: tuple[str, ...] = (
    "p_on", "p_peak", "p_off", "qrs_on", "r_peak", "qrs_off",
    "t_on", "t_peak", "t_off",
)

#: Internal working rate; records at other rates are resampled and the
#: resulting indices mapped back.
WORK_FS = 250.0


@dataclass
class FiducialSet:
    """Sample-index fiducials, one row per beat, NaN where absent."""

    idx: np.ndarray
    fs: float

    def __post_init__(self):
        self.idx = np.asarray(self.idx, dtype=np.float64)
        if self.idx.ndim != 2 or self.idx.shape[1] != len(FIDUCIAL_COLUMNS):
            raise ValueError(
                f"idx must be (n_beats, {len(FIDUCIAL_COLUMNS)})")
        for row in self.idx:
            present = row[~np.isnan(row)]
            if np.any(np.diff(present) < 0):
                raise ValueError(f"fiducials out of order: {row}")

    def __len__(self) -> int:
        return int(self.idx.shape[0])

    def col(self, name: str) -> np.ndarray:
        return self.idx[:, FIDUCIAL_COLUMNS.index(name)]

    def times_s(self, name: str) -> np.ndarray:
        return self.col(name) / self.fs


@dataclass
class DelineationConfig:
    """Search windows (seconds) and modulus-maximum threshold fractions.

    Waves are located at a coarse scale, where they dominate, and their
    boundaries are then walked out at a finer scale, where the response
    width tracks the wave width instead of the wavelet support. The
    gamma values are the |W| fractions at which a boundary walk stops.
    """

    qrs_scale: int = 2
    pt_scale: int = 4
    fine_scale: int = 3
    # QRS: modulus-maxima search around R and boundary thresholds
    qrs_mm_s: float = 0.080
    qrs_side_mm_frac: float = 0.04
    gamma_qrs_on: float = 0.30
    gamma_qrs_off: float = 0.50
    # T wave: window between this QRS offset and the next QRS onset
    t_gap_s: float = 0.020
    t_end_rr_frac: float = 0.75
    t_next_gap_s: float = 0.030
    gamma_t_on: float = 0.08
    gamma_t_off: float = 0.10
    t_absent_frac: float = 0.09
    # P wave: window between the previous T offset and this QRS onset
    p_win_s: float = 0.28
    p_gap_s: float = 0.030
    gamma_p_on: float = 0.30
    gamma_p_off: float = 0.50
    p_absent_frac: float = 0.08


DEFAULT_DELINEATION_CONFIG = DelineationConfig()

_LP = (0.125, 0.375, 0.375, 0.125)
_HP = (2.0, -2.0)


def _upsampled(taps: tuple[float, ...], factor: int) -> np.ndarray:
    out = np.zeros((len(taps) - 1) * factor + 1)
    out[::factor] = taps
    return out


def dyadic_wavelet(x: np.ndarray, n_scales: int = 5) -> dict[int, np.ndarray]:
    """Detail signals W_k aligned with ``x`` for scales 2^1 .. 2^n.

    Group delay of the k-th detail is 2^(k-2) + 1.5*(2^(k-1) - 1)
    samples; alignment rounds the half-sample remainder.
    """
    pad = 2 ** n_scales * 4
    ext = np.concatenate([np.full(pad, x[0]), x, np.full(pad, x[-1])])
    approx = ext
    delay = 0.0
    out: dict[int, np.ndarray] = {}
    for k in range(1, n_scales + 1):
        factor = 2 ** (k - 1)
        detail = np.convolve(approx, _upsampled(_HP, factor))
        d = delay + 0.5 * factor
        start = pad + int(round(d))
        out[k] = detail[start:start + x.size]
        approx = np.convolve(approx, _upsampled(_LP, factor))
        delay += 1.5 * factor
    return out


def _argmax_abs(w: np.ndarray, lo: int, hi: int) -> int | None:
    if hi <= lo:
        return None
    return lo + int(np.argmax(np.abs(w[lo:hi])))


_LOCAL_MIN_FRAC = 0.25


def _walk_onset(w: np.ndarray, mm: int, lo: int, gamma: float) -> int:
    """Walk left from ``mm`` to the wave boundary.

    Stops where |W| sinks below gamma*|W[mm]|, or at a local minimum of
    |W| once the flank has decayed below a quarter of the maximum; the
    second rule bounds the walk when noise keeps |W| off zero.
    """
    thr = gamma * abs(w[mm])
    lmin = _LOCAL_MIN_FRAC * abs(w[mm])
    i = mm
    while i > lo:
        i -= 1
        a = abs(w[i])
        if a < thr:
            return i
        if a < lmin and i > lo and abs(w[i - 1]) >= a and abs(w[i + 1]) >= a:
            return i
    return lo


def _walk_offset(w: np.ndarray, mm: int, hi: int, gamma: float) -> int:
    thr = gamma * abs(w[mm])
    lmin = _LOCAL_MIN_FRAC * abs(w[mm])
    i = mm
    while i < hi - 1:
        i += 1
        a = abs(w[i])
        if a < thr:
            return i
        if a < lmin and i < hi - 1 and abs(w[i - 1]) >= a and abs(w[i + 1]) >= a:
            return i
    return hi - 1


def _zero_cross(w: np.ndarray, a: int, b: int) -> int | None:
    """Sample of the sign change of ``w`` between the two maxima."""
    sa = np.sign(w[a])
    for i in range(a, b):
        if np.sign(w[i + 1]) != sa:
            return i if abs(w[i]) <= abs(w[i + 1]) else i + 1
    return None


def _local_mm(w: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Interior local maxima of |w| in [lo, hi).

    Window edges are excluded on purpose: energy leaking in from a
    neighbouring wave rises monotonically toward the edge and therefore
    never produces an interior maximum.
    """
    if hi - lo < 3:
        return np.empty(0, dtype=np.int64)
    a = np.abs(w[lo:hi])
    mask = (a[1:-1] >= a[:-2]) & (a[1:-1] > a[2:]) & (a[1:-1] > 0)
    return lo + 1 + np.flatnonzero(mask)


def _mm_pair(w: np.ndarray, lo: int, hi: int) -> tuple[int, int] | None:
    """Strongest opposite-signed pair of interior modulus maxima."""
    mm = _local_mm(w, lo, hi)
    if mm.size == 0:
        return None
    main = mm[int(np.argmax(np.abs(w[mm])))]
    opp = mm[np.sign(w[mm]) == -np.sign(w[main])]
    if opp.size == 0:
        return None
    partner = opp[int(np.argmax(np.abs(w[opp])))]
    return (main, partner) if main < partner else (partner, main)


def _delineate_qrs(w: np.ndarray, r: int, lo: int, hi: int,
                   cfg: DelineationConfig, fs: float) -> tuple[int, int]:
    """QRS onset/offset around one R peak at the QRS scale."""
    half = int(round(cfg.qrs_mm_s * fs))
    pre_lo, post_hi = max(lo, r - half), min(hi, r + half + 1)
    mm_pre = _argmax_abs(w, pre_lo, r + 1)
    mm_post = _argmax_abs(w, r, post_hi)
    if mm_pre is None or mm_post is None:
        return r, r
    strength = max(abs(w[mm_pre]), abs(w[mm_post]))
    side_thr = cfg.qrs_side_mm_frac * strength
    # a Q (S) wave adds one more opposite-signed slope maximum just
    # outside the R slopes; a single extension step is allowed so the
    # search cannot chain into the P or T wave
    first = mm_pre
    a, b = max(pre_lo, first - half), first
    if b > a:
        cand = a + int(np.argmax(-np.sign(w[first]) * w[a:b]))
        if -np.sign(w[first]) * w[cand] >= side_thr:
            first = cand
    last = mm_post
    a, b = last + 1, min(post_hi, last + half + 1)
    if b > a:
        cand = a + int(np.argmax(-np.sign(w[last]) * w[a:b]))
        if -np.sign(w[last]) * w[cand] >= side_thr:
            last = cand
    onset = _walk_onset(w, first, lo, cfg.gamma_qrs_on)
    offset = _walk_offset(w, last, hi, cfg.gamma_qrs_off)
    return onset, offset


def _delineate_wave(w_coarse: np.ndarray, w_fine: np.ndarray, lo: int, hi: int,
                    absent_thr: float, gamma_on: float, gamma_off: float,
                    ) -> tuple[int, int, int] | None:
    """Monophasic wave in [lo, hi): (onset, peak, offset) or absent.

    The wave is located at the coarse scale, where it dominates its
    neighbours; its flank maxima are then re-found at the fine scale,
    where the boundary walks and the peak zero crossing are evaluated
    and where the absence threshold applies. Gating absence on the fine
    scale matters: ringing of the much stronger QRS complex reaches
    into the P and T windows at the coarse scale but not at the fine
    one.
    """
    if hi - lo < 3:
        return None
    pair = _mm_pair(w_coarse, lo, hi)
    if pair is None:
        return None
    a, b = pair
    zc = _zero_cross(w_coarse, a, b)
    if zc is None:
        return None
    # coarse maxima sit outside the fine ones, so the inner spans
    # [a, zc] and [zc, b] bracket the fine flank maxima
    a_f = _argmax_abs(w_fine, a, zc + 1)
    b_f = _argmax_abs(w_fine, zc, b + 1)
    if a_f is None or b_f is None or a_f == b_f:
        return None
    if max(abs(w_fine[a_f]), abs(w_fine[b_f])) < absent_thr:
        return None
    peak = _zero_cross(w_fine, a_f, b_f)
    if peak is None:
        peak = zc
    onset = _walk_onset(w_fine, a_f, lo, gamma_on)
    offset = _walk_offset(w_fine, b_f, hi, gamma_off)
    return onset, peak, offset


def _to_work_grid(record: EcgRecord, beats: BeatSeries,
                  ) -> tuple[np.ndarray, np.ndarray, float]:
    if record.fs == WORK_FS:
        return record.samples_mv, beats.r_samples.astype(np.float64), 1.0
    up, down = int(round(WORK_FS)), int(round(record.fs))
    g = math.gcd(up, down)
    x = resample_poly(record.samples_mv, up // g, down // g)
    ratio = record.fs / WORK_FS
    return x, beats.r_samples / ratio, ratio


def delineate(record: EcgRecord, beats: BeatSeries,
              config: DelineationConfig | None = None) -> FiducialSet:
    """Per-beat fiducials for a band-passed record with refined beats.

    Works at 250 Hz internally; indices are mapped back to the record's
    own sampling grid. Search windows are anchored to each R peak and
    bounded by the midpoints toward the neighbouring beats, so waves are
    never attributed to two beats at once. A wave whose modulus maxima
    stay below the absence threshold, or whose boundaries would violate
    temporal ordering, is reported absent.
    """
    cfg = config or DEFAULT_DELINEATION_CONFIG
    n_beats = len(beats)
    out = np.full((n_beats, len(FIDUCIAL_COLUMNS)), np.nan)
    if n_beats == 0:
        return FiducialSet(idx=out, fs=record.fs)

    x, r_work, ratio = _to_work_grid(record, beats)
    w = dyadic_wavelet(x, n_scales=max(cfg.qrs_scale, cfg.pt_scale,
                                       cfg.fine_scale))
    wq, wc, wf = w[cfg.qrs_scale], w[cfg.pt_scale], w[cfg.fine_scale]
    n = x.size
    r_int = np.clip(np.round(r_work).astype(np.int64), 0, n - 1)

    # absence thresholds are relative to the record's own QRS strength
    # at the fine scale, where they are also tested
    half = int(round(cfg.qrs_mm_s * WORK_FS))
    qrs_fine_mm = [
        abs(wf[max(0, r - half):min(n, r + half + 1)]).max()
        for r in r_int
    ]
    ref = float(np.median(qrs_fine_mm)) if qrs_fine_mm else 0.0
    t_abs = cfg.t_absent_frac * ref
    p_abs = cfg.p_absent_frac * ref

    cols = {name: i for i, name in enumerate(FIDUCIAL_COLUMNS)}

    # pass 1: QRS boundaries for every beat
    q_ons = np.full(n_beats, -1, dtype=np.int64)
    q_offs = np.full(n_beats, -1, dtype=np.int64)
    for i, r in enumerate(r_int):
        prev_mid = 0 if i == 0 else (r_int[i - 1] + r) // 2
        next_mid = n - 1 if i == n_beats - 1 else (r + r_int[i + 1]) // 2
        out[i, cols["r_peak"]] = r_work[i]
        q_on, q_off = _delineate_qrs(wq, r, prev_mid, next_mid, cfg, WORK_FS)
        if q_on < r < q_off:
            q_ons[i], q_offs[i] = q_on, q_off
            out[i, cols["qrs_on"]], out[i, cols["qrs_off"]] = q_on, q_off

    # pass 2: T waves, bounded ahead by the next QRS onset
    t_offs = np.full(n_beats, -1, dtype=np.int64)
    for i, r in enumerate(r_int):
        if q_offs[i] < 0:
            continue
        rr_next = (r_int[i + 1] - r) if i + 1 < n_beats else \
            (r - r_int[i - 1]) if i > 0 else int(0.8 * WORK_FS)
        t_lo = q_offs[i] + int(round(cfg.t_gap_s * WORK_FS))
        t_hi = min(n - 1, r + int(round(cfg.t_end_rr_frac * rr_next)))
        if i + 1 < n_beats and q_ons[i + 1] >= 0:
            t_hi = min(t_hi, q_ons[i + 1]
                       - int(round(cfg.t_next_gap_s * WORK_FS)))
        t_res = _delineate_wave(wc, wf, t_lo, t_hi, t_abs,
                                cfg.gamma_t_on, cfg.gamma_t_off)
        if t_res is not None and q_offs[i] <= t_res[0] < t_res[1] < t_res[2]:
            out[i, cols["t_on"]:cols["t_off"] + 1] = t_res
            t_offs[i] = t_res[2]

    # pass 3: P waves, bounded behind by the previous T offset
    for i, r in enumerate(r_int):
        if q_ons[i] < 0:
            continue
        prev_mid = 0 if i == 0 else (r_int[i - 1] + r) // 2
        p_hi = q_ons[i] - int(round(cfg.p_gap_s * WORK_FS))
        p_lo = max(prev_mid, q_ons[i] - int(round(cfg.p_win_s * WORK_FS)))
        if i > 0 and t_offs[i - 1] >= 0:
            p_lo = max(p_lo, t_offs[i - 1])
        p_res = _delineate_wave(wc, wf, p_lo, p_hi, p_abs,
                                cfg.gamma_p_on, cfg.gamma_p_off)
        if p_res is not None and p_res[0] < p_res[1] < p_res[2] <= q_ons[i]:
            out[i, cols["p_on"]:cols["p_off"] + 1] = p_res

    if ratio != 1.0:
        out *= ratio
    return FiducialSet(idx=out, fs=record.fs)
