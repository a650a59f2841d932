"""Morphology features: 74 interval and wave statistics per hour.

Thirty-eight interval-duration features and thirty-six wave-shape
features, computed beat by beat from the delineated fiducials and then
summarized as median/mean/std/max. Features come in families sharing
the same per-beat quantity; a family with fewer than ten usable beats
is flagged missing as a whole rather than estimated from scraps.

Units follow the feature dictionary: durations in ms, amplitudes in
1e-4 V (mV times ten), QRS areas in 1e-4 V*s, differences against the
reference QRS in percent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cohort import EcgRecord
from .delineation import FiducialSet
from .errors import InsufficientDataError
from .preprocess import NnSeries

#: A family with fewer per-beat values than this is reported missing.
MIN_FAMILY_BEATS = 10

#: mV to 1e-4 V
_AMP_SCALE = 10.0

_STATS = ("med", "mean", "std", "max")

#: Interval-duration families, feature name D<stat><family>.
_DURATION_FAMILIES = ("P", "PR", "PRseg", "QRS", "QT", "T", "RR")

_QTC_NAMES = ("DmedQT_b", "DmedQT_fre", "DmedQT_fra", "DmedQT_hod")

_WAVE_NAMES = (
    "medP", "meanP", "stdP", "maxP",
    "medST", "meanST", "stdST", "maxST",
    "medR", "meanR", "stdR", "maxR",
    "medDR", "meanDR", "stdDR", "maxDR",
    "medQRS", "meanQRS", "stdQRS", "maxQRS",
    "SmedQRS", "SmeanQRS", "SstdQRS", "SmaxQRS",
    "SmedQRSdiff", "SmeanQRSdiff", "SstdQRSdiff", "SmaxQRSdiff",
    "DmedQRSdiff", "DmeanQRSdiff", "DstdQRSdiff", "DmaxQRSdiff",
    "medJ", "meanJ", "stdJ", "maxJ",
)

MOR_FEATURE_NAMES: tuple[str, ...] = (
    tuple(f"D{s}{fam}" for fam in _DURATION_FAMILIES for s in _STATS)
    + tuple(f"IR{s}" for s in _STATS)
    + ("MDPR", "MAPR")
    + _QTC_NAMES
    + _WAVE_NAMES
)
assert len(MOR_FEATURE_NAMES) == 74

#: Families of signed per-beat values; their stats are only checked for
#: finiteness (std/max of a signed quantity can sit below the median).
_SIGNED_STATS = frozenset(
    [f"{s}{fam}" for fam in ("P", "ST", "R", "J") for s in _STATS])

#: Names exempt from the non-negativity check: signed amplitudes plus
#: the additive QT corrections, which can dip below QT itself.
_SIGN_EXEMPT = _SIGNED_STATS | set(_QTC_NAMES)

Partial = dict[str, float | None]


def _stat_names(fam: str, prefix: str = "") -> list[str]:
    return [f"{prefix}{s}{fam}" for s in _STATS]


def _emit(out: Partial, names: list[str], values: np.ndarray) -> None:
    """med/mean/std/max of per-beat values, or a missing family."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size < MIN_FAMILY_BEATS:
        for n in names:
            out[n] = None
        return
    out[names[0]] = float(np.median(values))
    out[names[1]] = float(np.mean(values))
    out[names[2]] = float(np.std(values, ddof=1))
    out[names[3]] = float(np.max(values))


def _qtc(out: Partial, rr_ms: np.ndarray) -> None:
    """Corrected QT from the median QT and the median NN interval."""
    qt = out.get("DmedQT")
    if qt is None or rr_ms.size < MIN_FAMILY_BEATS:
        for n in _QTC_NAMES:
            out[n] = None
        return
    rr = float(np.median(rr_ms))
    rr_s = rr / 1e3
    out["DmedQT_b"] = qt / np.sqrt(rr_s)
    out["DmedQT_fre"] = qt / rr_s ** (1.0 / 3.0)
    out["DmedQT_fra"] = qt + 0.154 * (1e3 - rr)
    out["DmedQT_hod"] = qt + 1.75 * (60e3 / rr - 60.0)


def mor_intervals(fiducials: FiducialSet, nn: NnSeries) -> Partial:
    """Interval-duration block: 38 features from fiducial timing.

    RR and the RR-ratio (IR) statistics are taken from the filtered NN
    series rather than raw fiducial differences, so ectopy rejected
    upstream cannot leak back in. The corrected-QT variants apply
    Bazett, Fridericia, Framingham and Hodges to the median QT against
    the median NN interval.
    """
    ms = 1e3 / fiducials.fs
    col = fiducials.col
    out: Partial = {}
    per_beat = {
        "P": (col("p_off") - col("p_on")) * ms,
        "PR": (col("qrs_on") - col("p_on")) * ms,
        "PRseg": (col("qrs_on") - col("p_off")) * ms,
        "QRS": (col("qrs_off") - col("qrs_on")) * ms,
        "QT": (col("t_off") - col("qrs_on")) * ms,
        "T": (col("t_off") - col("t_on")) * ms,
    }
    for fam, values in per_beat.items():
        _emit(out, _stat_names(fam, "D"), values)

    rr = nn.nn_ms
    _emit(out, _stat_names("RR", "D"), rr)
    ir = rr[1:] / rr[:-1] if rr.size > 1 else np.empty(0)
    _emit(out, [f"IR{s}" for s in _STATS], ir)

    # Mao-style PR runs from P onset to the R peak instead of QRS onset
    mao_pr = (col("r_peak") - col("p_on")) * ms
    mao_pr = mao_pr[np.isfinite(mao_pr)]
    if mao_pr.size < MIN_FAMILY_BEATS:
        out["MDPR"] = out["MAPR"] = None
    else:
        out["MDPR"] = float(np.median(mao_pr))
        out["MAPR"] = float(np.mean(mao_pr))

    _qtc(out, rr)
    return out


def _beat_baselines(x: np.ndarray, fid: FiducialSet) -> np.ndarray:
    """Per-beat isoelectric level: median of the PR segment."""
    p_off, q_on = fid.col("p_off"), fid.col("qrs_on")
    base = np.full(len(fid), np.nan)
    for i in range(len(fid)):
        if np.isnan(p_off[i]) or np.isnan(q_on[i]):
            continue
        lo = int(round(p_off[i]))
        hi = min(int(round(q_on[i])) + 1, x.size)
        if 0 <= lo < hi:
            base[i] = float(np.median(x[lo:hi]))
    return base


def mor_waves(record: EcgRecord, fiducials: FiducialSet) -> Partial:
    """Wave-shape block: 36 features measured on the signal itself.

    All amplitudes are measured against the per-beat PR-segment median.
    The reference QRS is the beat whose area sits at the hour's median;
    the S*QRSdiff and D*QRSdiff families are absolute percent
    deviations of each beat's area and width from that reference.
    """
    x = record.samples_mv
    fid = fiducials
    n = len(fid)
    ms = 1e3 / fid.fs
    base = _beat_baselines(x, fid)

    def _at(name: str, i: int) -> float:
        v = fid.col(name)[i]
        if np.isnan(v):
            return np.nan
        j = int(round(v))
        return float(x[j]) if 0 <= j < x.size else np.nan

    p_amp = np.full(n, np.nan)
    r_amp = np.full(n, np.nan)
    st_amp = np.full(n, np.nan)
    j_amp = np.full(n, np.nan)
    qrs_amp = np.full(n, np.nan)
    area = np.full(n, np.nan)
    width = np.full(n, np.nan)
    q_on, q_off = fid.col("qrs_on"), fid.col("qrs_off")
    t_on = fid.col("t_on")
    for i in range(n):
        b = base[i]
        if not np.isnan(b):
            p_amp[i] = (_at("p_peak", i) - b) * _AMP_SCALE
            r_amp[i] = (_at("r_peak", i) - b) * _AMP_SCALE
            j_amp[i] = (_at("qrs_off", i) - b) * _AMP_SCALE
        if not (np.isnan(q_on[i]) or np.isnan(q_off[i])):
            lo, hi = int(round(q_on[i])), int(round(q_off[i]))
            if 0 <= lo < hi < x.size:
                seg = x[lo:hi + 1]
                qrs_amp[i] = float(np.ptp(seg)) * _AMP_SCALE
                width[i] = (hi - lo) * ms
                if not np.isnan(b):
                    area[i] = float(np.sum(np.abs(seg - b))) \
                        / record.fs * _AMP_SCALE
        if not (np.isnan(q_off[i]) or np.isnan(t_on[i]) or np.isnan(b)):
            lo = int(round(q_off[i]))
            hi = min(int(round(t_on[i])) + 1, x.size)
            if 0 <= lo < hi:
                st_amp[i] = (float(np.mean(x[lo:hi])) - b) * _AMP_SCALE

    # beat-to-beat R amplitude change, consecutive beats only
    dr = np.abs(np.diff(r_amp)) if n > 1 else np.empty(0)

    out: Partial = {}
    _emit(out, _stat_names("P"), p_amp)
    _emit(out, _stat_names("ST"), st_amp)
    _emit(out, _stat_names("R"), r_amp)
    _emit(out, _stat_names("DR"), dr)
    _emit(out, _stat_names("QRS"), qrs_amp)
    _emit(out, _stat_names("QRS", "S"), area)

    ok = np.isfinite(area)
    sdiff = np.full(n, np.nan)
    ddiff = np.full(n, np.nan)
    if ok.sum() >= MIN_FAMILY_BEATS:
        idx = np.flatnonzero(ok)
        target = float(np.median(area[idx]))
        ref = int(idx[np.argmin(np.abs(area[idx] - target))])
        if area[ref] > 0 and width[ref] > 0:
            sdiff[ok] = 100.0 * np.abs(area[ok] - area[ref]) / area[ref]
            wk = ok & np.isfinite(width)
            ddiff[wk] = 100.0 * np.abs(width[wk] - width[ref]) / width[ref]
    _emit(out, _stat_names("QRSdiff", "S"), sdiff)
    _emit(out, _stat_names("QRSdiff", "D"), ddiff)
    _emit(out, _stat_names("J"), j_amp)
    return out


def _families() -> list[tuple[tuple[str, ...], bool]]:
    """(names, is_stat_family) for every feature family."""
    fams: list[tuple[tuple[str, ...], bool]] = []
    for fam in _DURATION_FAMILIES:
        fams.append((tuple(_stat_names(fam, "D")), True))
    fams.append((tuple(f"IR{s}" for s in _STATS), True))
    fams.append((("MDPR", "MAPR"), False))
    fams.append((_QTC_NAMES, False))
    for k in range(0, len(_WAVE_NAMES), 4):
        fams.append((_WAVE_NAMES[k:k + 4], True))
    return fams


@dataclass
class MorVector:
    """All 74 morphology features; missing families carry NaN."""

    values: dict[str, float]
    missing: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        got = set(self.values)
        expected = set(MOR_FEATURE_NAMES)
        if got != expected:
            raise ValueError(
                f"unexpected/missing names: {sorted(got ^ expected)}")
        for name in MOR_FEATURE_NAMES:
            v = self.values[name]
            if name in self.missing:
                if not np.isnan(v):
                    raise ValueError(f"{name} flagged missing but has {v}")
                continue
            if not np.isfinite(v):
                raise ValueError(f"{name} is {v} but not flagged missing")
            if name not in _SIGN_EXEMPT and v < 0:
                raise ValueError(f"{name} must be non-negative, got {v}")
        for names, is_stat in _families():
            present = [n for n in names if n not in self.missing]
            if present and len(present) != len(names):
                raise ValueError(f"family partially missing: {names}")
            if not present or not is_stat or names[0] in _SIGNED_STATS:
                continue
            med, mean, mx = (self.values[names[0]], self.values[names[1]],
                             self.values[names[3]])
            if mx < med - 1e-9 or mx < mean - 1e-9:
                raise ValueError(f"max below med/mean in {names[3]}")

    def as_row(self) -> list[float]:
        return [self.values[n] for n in MOR_FEATURE_NAMES]


def mor_features(record: EcgRecord, fiducials: FiducialSet,
                 nn: NnSeries) -> MorVector:
    """All 74 morphology features for one delineated hour."""
    if len(fiducials) == 0:
        raise InsufficientDataError("no beats to measure")
    merged: Partial = {}
    merged.update(mor_intervals(fiducials, nn))
    merged.update(mor_waves(record, fiducials))
    values = {n: (np.nan if merged[n] is None else float(merged[n]))
              for n in MOR_FEATURE_NAMES}
    missing = frozenset(n for n in MOR_FEATURE_NAMES if merged[n] is None)
    return MorVector(values=values, missing=missing)
