"""Heart-rate-variability features from one hour of NN intervals.

Four blocks: time domain, fragmentation, spectral, nonlinear. bSQI is
carried in from the signal-quality stage so the assembled vector matches
the serialized feature table one-for-one. Features whose preconditions
fail are flagged missing, never silently absent; downstream imputation
decides what to do with them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lombscargle

from .errors import InsufficientDataError
from .preprocess import NnSeries

HRV_FEATURE_NAMES: tuple[str, ...] = (
    "bSQI", "Alpha 1", "Alpha 2", "AVNN", "BETA", "HF norm", "HF peak",
    "HF power", "IALS", "LF norm", "LF peak", "LF power", "LF to HF",
    "PAS", "PIP", "pNN50", "PSS", "RMSSD", "SampEn", "SD1", "SD2",
    "SDNN", "SEM", "Total power", "VLF norm", "VLF power",
)

_PERCENT_NAMES = frozenset(
    {"pNN50", "PIP", "PSS", "PAS", "VLF norm", "LF norm", "HF norm"})
_POWER_NAMES = frozenset(
    {"Total power", "VLF power", "LF power", "HF power"})
_EPS = 1e-9

Partial = dict[str, float | None]


@dataclass(frozen=True)
class HrvConfig:
    """Knobs the source material leaves open: band edges and DFA scales."""

    vlf_band_hz: tuple[float, float] = (0.003, 0.04)
    lf_band_hz: tuple[float, float] = (0.04, 0.15)
    hf_band_hz: tuple[float, float] = (0.15, 0.40)
    min_vlf_span_s: float = 300.0
    pnn_threshold_ms: float = 50.0
    sampen_m: int = 2
    sampen_r_frac: float = 0.2
    alpha1_scales: tuple[int, int] = (4, 15)
    alpha2_scales: tuple[int, int] = (16, 64)


DEFAULT_HRV_CONFIG = HrvConfig()


@dataclass(frozen=True)
class HrvVector:
    """The full named feature set of one patient-hour.

    ``values`` holds every feature name; entries listed in ``missing``
    are NaN. Percent-scaled features live in [0, 100], powers are
    non-negative, AVNN is positive.
    """

    values: dict[str, float]
    missing: frozenset[str]

    def __post_init__(self):
        if set(self.values) != set(HRV_FEATURE_NAMES):
            unknown = set(self.values) - set(HRV_FEATURE_NAMES)
            absent = set(HRV_FEATURE_NAMES) - set(self.values)
            raise ValueError(
                f"feature names mismatch: unknown={sorted(unknown)} "
                f"absent={sorted(absent)}")
        for name in self.missing:
            if not math.isnan(self.values[name]):
                raise ValueError(f"{name} flagged missing but has a value")
        for name, v in self.values.items():
            if name in self.missing:
                continue
            if not math.isfinite(v):
                raise ValueError(f"{name} is {v} but not flagged missing")
            if name in _POWER_NAMES and v < -_EPS:
                raise ValueError(f"{name} must be non-negative, got {v}")
            if name in _PERCENT_NAMES and not (-_EPS <= v <= 100.0 + _EPS):
                raise ValueError(f"{name} must lie in [0, 100], got {v}")
        if "AVNN" not in self.missing and self.values["AVNN"] <= 0:
            raise ValueError("AVNN must be positive")

    def as_row(self) -> list[float]:
        """Values in canonical feature order, NaN where missing."""
        return [self.values[name] for name in HRV_FEATURE_NAMES]


def _require(nn: NnSeries, n_min: int, what: str) -> np.ndarray:
    if len(nn) < n_min:
        raise InsufficientDataError(
            f"{what} needs >= {n_min} NN intervals, got {len(nn)}")
    return nn.nn_ms


def hrv_time_domain(nn: NnSeries,
                    config: HrvConfig | None = None) -> Partial:
    """AVNN, SDNN, SEM, RMSSD, pNN50.

    pNN50 counts successive differences strictly greater than the
    threshold, so a diff of exactly 50 ms does not count.
    """
    cfg = config or DEFAULT_HRV_CONFIG
    x = _require(nn, 2, "time-domain HRV")
    d = np.diff(x)
    sdnn = float(np.std(x, ddof=1))
    return {
        "AVNN": float(np.mean(x)),
        "SDNN": sdnn,
        "SEM": sdnn / math.sqrt(x.size),
        "RMSSD": float(np.sqrt(np.mean(d * d))),
        "pNN50": 100.0 * float(np.sum(np.abs(d) > cfg.pnn_threshold_ms)) / d.size,
    }


def _inflection_count(d: np.ndarray) -> int:
    # zero diffs inherit the previous nonzero sign; a plateau is not an
    # inflection by itself
    count = 0
    prev = 0
    for v in np.sign(d):
        if v == 0:
            continue
        if prev != 0 and v != prev:
            count += 1
        prev = int(v)
    return count


def _sign_segments(d: np.ndarray) -> list[int]:
    """Lengths of maximal runs of constant nonzero sign; zeros break runs."""
    lengths: list[int] = []
    cur_sign = 0
    cur_len = 0
    for v in np.sign(d):
        if v == 0:
            if cur_len:
                lengths.append(cur_len)
            cur_sign, cur_len = 0, 0
        elif v == cur_sign:
            cur_len += 1
        else:
            if cur_len:
                lengths.append(cur_len)
            cur_sign, cur_len = int(v), 1
    if cur_len:
        lengths.append(cur_len)
    return lengths


def _alternation_runs(d: np.ndarray) -> list[int]:
    """Lengths of maximal runs where each diff flips the previous sign."""
    s = np.sign(d)
    runs: list[int] = []
    start: int | None = None
    for i, v in enumerate(s):
        if v == 0:
            if start is not None:
                runs.append(i - start)
                start = None
            continue
        if start is None:
            start = i
        elif v != -s[i - 1]:
            runs.append(i - start)
            start = i
    if start is not None:
        runs.append(len(s) - start)
    return runs


def hrv_fragmentation(nn: NnSeries) -> Partial:
    """PIP, IALS, PSS, PAS (heart-rate fragmentation indices).

    PIP is the percentage of NN intervals at which the sign of the
    successive difference flips; IALS the inverse mean length of the
    constant-sign (acceleration/deceleration) segments; PSS the
    percentage of differences inside segments shorter than 3; PAS the
    percentage inside alternation runs of length >= 4. A constant
    series has no segments and scores 0 on all four.
    """
    x = _require(nn, 4, "fragmentation HRV")
    d = np.diff(x)
    segments = _sign_segments(d)
    total = sum(segments)
    pip = 100.0 * _inflection_count(d) / x.size
    ials = len(segments) / total if total else 0.0
    pss = 100.0 * sum(n for n in segments if n < 3) / d.size
    pas = 100.0 * sum(n for n in _alternation_runs(d) if n >= 4) / d.size
    return {"PIP": pip, "IALS": ials, "PSS": pss, "PAS": pas}


def _band_mask(f: np.ndarray, band: tuple[float, float]) -> np.ndarray:
    return (f >= band[0]) & (f < band[1])


def _loglog_slope(f: np.ndarray, p: np.ndarray) -> float | None:
    ok = (f > 0) & (p > 0)
    if int(ok.sum()) < 2:
        return None
    return float(np.polyfit(np.log10(f[ok]), np.log10(p[ok]), 1)[0])


def hrv_spectral(nn: NnSeries, config: HrvConfig | None = None) -> Partial:
    """Band powers, norms, peaks, LF/HF ratio and the log-log slope BETA.

    Lomb-Scargle on the unevenly spaced (t, NN) pairs; no resampling, so
    dropped intervals leave gaps instead of interpolation artifacts. The
    grid runs from max(0.003, 1/T) to the HF upper edge in steps of
    1/(2T). Norms divide by (total - VLF); VLF norm divides by total so
    it stays within [0, 100]. Below ``min_vlf_span_s`` of data the VLF
    fields and BETA are flagged.
    """
    cfg = config or DEFAULT_HRV_CONFIG
    x = _require(nn, 2, "spectral HRV")
    names = ("Total power", "VLF power", "LF power", "HF power",
             "VLF norm", "LF norm", "HF norm", "LF peak", "HF peak",
             "LF to HF", "BETA")
    out: Partial = {name: None for name in names}
    t = nn.t_s
    span = float(t[-1] - t[0]) if t.size else 0.0
    if span <= 0:
        return out
    f_hi = cfg.hf_band_hz[1]
    f_lo = max(cfg.vlf_band_hz[0], 1.0 / span)
    df = 1.0 / (2.0 * span)
    if f_lo >= f_hi:
        return out
    freqs = np.arange(f_lo, f_hi, df)
    xc = x - x.mean()
    power = 2.0 * lombscargle(t, xc, 2.0 * np.pi * freqs) / x.size
    power = np.maximum(power, 0.0)
    total = float(power.sum())
    if total <= 0:
        return out

    vlf = float(power[_band_mask(freqs, cfg.vlf_band_hz)].sum())
    lf_mask = _band_mask(freqs, cfg.lf_band_hz)
    hf_mask = _band_mask(freqs, cfg.hf_band_hz)
    lf = float(power[lf_mask].sum())
    hf = float(power[hf_mask].sum())
    out["Total power"] = total
    out["LF power"] = lf
    out["HF power"] = hf
    denom = total - vlf
    if denom > 0:
        out["LF norm"] = min(100.0, 100.0 * lf / denom)
        out["HF norm"] = min(100.0, 100.0 * hf / denom)
    if lf_mask.any():
        out["LF peak"] = float(freqs[lf_mask][np.argmax(power[lf_mask])])
    if hf_mask.any():
        out["HF peak"] = float(freqs[hf_mask][np.argmax(power[hf_mask])])
    if hf > 0:
        out["LF to HF"] = lf / hf
    if span >= cfg.min_vlf_span_s:
        out["VLF power"] = vlf
        out["VLF norm"] = min(100.0, 100.0 * vlf / total)
        below = freqs < cfg.vlf_band_hz[1]
        out["BETA"] = _loglog_slope(freqs[below], power[below])
    return out


def _sampen(x: np.ndarray, m: int, r: float) -> float | None:
    """Sample entropy; None when no template pairs match at m or m+1."""
    n = x.size
    if n <= m + 1 or r <= 0:
        return None
    n_templates = n - m  # same population for both lengths
    b = 0
    a = 0
    for i in range(n_templates - 1):
        d = np.abs(x[i + 1:n_templates] - x[i])
        for k in range(1, m):
            d = np.maximum(d, np.abs(x[i + 1 + k:n_templates + k] - x[i + k]))
        close = d <= r
        b += int(close.sum())
        d_ext = np.maximum(d, np.abs(x[i + 1 + m:n_templates + m] - x[i + m]))
        a += int((close & (d_ext <= r)).sum())
    if a == 0 or b == 0:
        return None
    return -math.log(a / b)


def _dfa_fluctuation(y: np.ndarray, scale: int) -> float | None:
    n_win = y.size // scale
    if n_win < 1:
        return None
    z = y[:n_win * scale].reshape(n_win, scale)
    t = np.arange(scale, dtype=np.float64)
    t_c = t - t.mean()
    denom = float(np.sum(t_c * t_c))
    slope = (z @ t_c) / denom
    resid = z - z.mean(axis=1, keepdims=True) - slope[:, None] * t_c
    return float(np.sqrt(np.mean(resid * resid)))


def _dfa_alpha(x: np.ndarray, scales: tuple[int, int]) -> float | None:
    lo, hi = scales
    if x.size < hi:
        return None
    y = np.cumsum(x - x.mean())
    pts = [(s, _dfa_fluctuation(y, s)) for s in range(lo, hi + 1)]
    pts = [(s, f) for s, f in pts if f is not None and f > 0]
    if len(pts) < 2:
        return None
    log_s = np.log([s for s, _ in pts])
    log_f = np.log([f for _, f in pts])
    return float(np.polyfit(log_s, log_f, 1)[0])


def hrv_nonlinear(nn: NnSeries, config: HrvConfig | None = None) -> Partial:
    """SD1/SD2 (Poincare axes), sample entropy, DFA short/long slopes.

    SampEn uses m=2 and r = 0.2 * SDNN; a constant series makes the
    tolerance degenerate and flags it. Alpha 2 needs at least as many
    intervals as its largest scale.
    """
    cfg = config or DEFAULT_HRV_CONFIG
    x = _require(nn, 2, "nonlinear HRV")
    d = np.diff(x)
    sd1_sq = float(np.var(d)) / 2.0
    sd1 = math.sqrt(sd1_sq)
    sd2 = math.sqrt(max(2.0 * float(np.var(x)) - sd1_sq, 0.0))
    r = cfg.sampen_r_frac * float(np.std(x, ddof=1))
    return {
        "SD1": sd1,
        "SD2": sd2,
        "SampEn": _sampen(x, cfg.sampen_m, r),
        "Alpha 1": _dfa_alpha(x, cfg.alpha1_scales),
        "Alpha 2": _dfa_alpha(x, cfg.alpha2_scales),
    }


def hrv_features(nn: NnSeries, bsqi: float,
                 config: HrvConfig | None = None) -> HrvVector:
    """Assemble the full vector for one patient-hour.

    Blocks whose preconditions fail contribute flagged-missing entries;
    fewer than 2 intervals is unrecoverable and raises.
    """
    if not 0.0 <= bsqi <= 1.0:
        raise ValueError(f"bsqi must lie in [0, 1], got {bsqi}")
    _require(nn, 2, "HRV")
    cfg = config or DEFAULT_HRV_CONFIG
    merged: Partial = {name: None for name in HRV_FEATURE_NAMES}
    merged["bSQI"] = float(bsqi)
    merged.update(hrv_time_domain(nn, cfg))
    try:
        merged.update(hrv_fragmentation(nn))
    except InsufficientDataError:
        pass
    merged.update(hrv_spectral(nn, cfg))
    merged.update(hrv_nonlinear(nn, cfg))
    values = {name: (math.nan if v is None else float(v))
              for name, v in merged.items()}
    missing = frozenset(name for name, v in merged.items() if v is None)
    return HrvVector(values=values, missing=missing)
