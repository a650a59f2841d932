"""Hourly feature rows: metadata + HRV + morphology per quality-passing hour.

Each admission hour of each patient becomes at most one row of 116 features
(16 metadata, 26 HRV, 74 morphology). An hour enters the dataset only when
its mean beat-agreement SQI reaches the quality gate; patients with no
passing hour contribute nothing. Feature values that could not be computed
are kept as NaN and flagged, never silently zeroed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .cohort import Cohort, EcgRecord, Label, META_COLUMNS
from .delineation import delineate
from .errors import CohortIntegrityError, InsufficientDataError
from .hrv import HRV_FEATURE_NAMES, hrv_features
from .morphology import MOR_FEATURE_NAMES, mor_features
from .preprocess import (
    bandpass,
    detect_rpeaks_primary,
    detect_rpeaks_secondary,
    filter_nn,
    refine_rpeaks,
)
from .quality import HOUR_GATE, windowed_sqi

ECG_FEATURE_NAMES: tuple[str, ...] = HRV_FEATURE_NAMES + MOR_FEATURE_NAMES
FEATURE_NAMES: tuple[str, ...] = tuple(META_COLUMNS) + ECG_FEATURE_NAMES
assert len(FEATURE_NAMES) == 116 == len(set(FEATURE_NAMES))

MAX_HOURS = 48
HOUR_S = 3600.0
# Shortest hour fragment still worth summarising (a trailing segment edge).
MIN_HOUR_SPAN_S = 600.0


@dataclass(frozen=True)
class HourFeatures:
    """ECG-derived features of one hour, plus the hour's mean SQI."""

    values: dict[str, float]
    missing: frozenset[str]
    mean_bsqi: float

    def __post_init__(self):
        if set(self.values) != set(ECG_FEATURE_NAMES):
            raise ValueError("hour features must cover the ECG feature names")
        if not 0.0 <= self.mean_bsqi <= 1.0:
            raise ValueError(f"mean_bsqi must lie in [0, 1], got {self.mean_bsqi}")


@dataclass(frozen=True)
class FeatureRow:
    """One quality-passing admission hour of one patient.

    ``values`` covers every feature name, NaN where flagged in ``missing``;
    metadata features encode absent answers as 0 and are never missing.
    """

    patient_id: str
    hour_index: int
    values: dict[str, float]
    missing: frozenset[str]
    label: int
    mean_bsqi: float

    def __post_init__(self):
        if not 0 <= self.hour_index < MAX_HOURS:
            raise ValueError(f"hour_index must lie in [0, {MAX_HOURS})")
        if set(self.values) != set(FEATURE_NAMES):
            unknown = set(self.values) - set(FEATURE_NAMES)
            absent = set(FEATURE_NAMES) - set(self.values)
            raise ValueError(f"bad feature names: unknown={unknown} absent={absent}")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        if not 0.0 <= self.mean_bsqi <= 1.0:
            raise ValueError("mean_bsqi must lie in [0, 1]")
        if not self.missing <= set(ECG_FEATURE_NAMES):
            raise ValueError("only ECG-derived features may be missing")
        for name in FEATURE_NAMES:
            v = self.values[name]
            if name in self.missing:
                if not math.isnan(v):
                    raise ValueError(f"{name} flagged missing but has value {v}")
            elif v is None or math.isnan(v):
                raise ValueError(f"{name} is NaN but not flagged missing")

    def as_vector(self) -> np.ndarray:
        return np.array([self.values[n] for n in FEATURE_NAMES], dtype=np.float64)


def hour_slices(record: EcgRecord, max_hours: int = MAX_HOURS,
                min_span_s: float = MIN_HOUR_SPAN_S):
    """Yield ``(hour_index, sub_record)`` for admission hours the segment covers.

    Hour ``h`` spans ``[3600 h, 3600 (h + 1))`` seconds from admission; a
    fragment shorter than ``min_span_s`` is skipped.
    """
    t0 = record.start_offset_s
    t1 = t0 + record.duration_s
    first = int(t0 // HOUR_S)
    last = int(np.ceil(t1 / HOUR_S))
    for h in range(first, min(last, max_hours)):
        lo = max(t0, h * HOUR_S)
        hi = min(t1, (h + 1) * HOUR_S)
        if hi - lo < min_span_s:
            continue
        i0 = int(round((lo - t0) * record.fs))
        i1 = int(round((hi - t0) * record.fs))
        sub = EcgRecord(
            patient_id=record.patient_id,
            segment_id=f"{record.segment_id}:h{h}",
            fs=record.fs,
            start_offset_s=lo,
            samples_mv=record.samples_mv[i0:i1],
        )
        yield h, sub


def _all_missing(names: tuple[str, ...]) -> dict[str, float]:
    return {n: float("nan") for n in names}


def quality_scan(record: EcgRecord):
    """Dual-detector beat detection and windowed SQI for one record.

    Returns ``(beats, sqi, mean_bsqi)`` where ``beats`` is the refined
    primary detection the rest of the pipeline consumes.
    """
    prim = refine_rpeaks(record, detect_rpeaks_primary(record))
    sec = detect_rpeaks_secondary(record)
    sqi = windowed_sqi(record, prim, sec)
    mean_bsqi = float(np.mean(sqi.values)) if sqi.values.size else 0.0
    return prim, sqi, mean_bsqi


def extract_hour(sub: EcgRecord) -> HourFeatures:
    """Run the full per-hour signal pipeline on one hour-slice record.

    Detection and SQI always run; the HRV and morphology blocks degrade to
    flagged-missing when the hour lacks usable beats.
    """
    filt = bandpass(sub)
    prim, _, mean_bsqi = quality_scan(sub)

    values: dict[str, float] = {}
    missing: set[str] = set()
    nn = None
    try:
        nn = filter_nn(prim)
        hrv = hrv_features(nn, mean_bsqi)
        for name in HRV_FEATURE_NAMES:
            v = hrv.values[name]
            values[name] = float("nan") if name in hrv.missing else float(v)
        missing |= hrv.missing
    except InsufficientDataError:
        values.update(_all_missing(HRV_FEATURE_NAMES))
        missing |= set(HRV_FEATURE_NAMES)

    try:
        if nn is None:
            raise InsufficientDataError("no usable NN series for this hour")
        fiducials = delineate(filt, prim)
        mor = mor_features(filt, fiducials, nn)
        for name in MOR_FEATURE_NAMES:
            values[name] = float(mor.values[name])
        missing |= mor.missing
    except InsufficientDataError:
        values.update(_all_missing(MOR_FEATURE_NAMES))
        missing |= set(MOR_FEATURE_NAMES)

    return HourFeatures(values=values, missing=frozenset(missing),
                        mean_bsqi=mean_bsqi)


def build_dataset(cohort: Cohort, labels: dict[str, Label] | None = None,
                  extractor=extract_hour, gate: float = HOUR_GATE,
                  max_hours: int = MAX_HOURS,
                  min_span_s: float = MIN_HOUR_SPAN_S) -> list[FeatureRow]:
    """Assemble feature rows for every quality-passing hour of a cohort.

    ``extractor`` maps an hour-slice record to :class:`HourFeatures`; tests
    substitute a stub to drive quality schedules without rendering signals.
    Patients whose every hour fails the gate are dropped. Raises
    :class:`InsufficientDataError` on an empty cohort or when no hour at all
    passes, and :class:`CohortIntegrityError` if two segments of one patient
    yield the same hour.
    """
    if not cohort.patient_ids:
        raise InsufficientDataError("cohort has no patients")
    if labels is None:
        labels = cohort.labels()

    rows: list[FeatureRow] = []
    seen: set[tuple[str, int]] = set()
    for pid in cohort.patient_ids:
        meta_values = cohort.meta[pid].feature_values()
        label = int(labels[pid] is Label.SEIZURE)
        for rec in cohort.records_of(pid):
            for h, sub in hour_slices(rec, max_hours, min_span_s):
                hf = extractor(sub)
                if hf.mean_bsqi < gate:
                    continue
                if (pid, h) in seen:
                    raise CohortIntegrityError(
                        f"patient {pid} hour {h} covered by two segments")
                seen.add((pid, h))
                rows.append(FeatureRow(
                    patient_id=pid,
                    hour_index=h,
                    values={**meta_values, **hf.values},
                    missing=hf.missing,
                    label=label,
                    mean_bsqi=hf.mean_bsqi,
                ))
    if not rows:
        raise InsufficientDataError("no hour passed the quality gate")
    return rows


def first_passing_hours(rows: list[FeatureRow]) -> list[FeatureRow]:
    """The earliest passing hour of each patient, in patient order of ``rows``."""
    best: dict[str, FeatureRow] = {}
    for row in rows:
        cur = best.get(row.patient_id)
        if cur is None or row.hour_index < cur.hour_index:
            best[row.patient_id] = row
    return list(best.values())


def design_matrix(rows: list[FeatureRow],
                  feature_names: tuple[str, ...] = FEATURE_NAMES):
    """Rows as ``(X, y, patient_ids)`` with NaN marking missing values."""
    if not rows:
        raise InsufficientDataError("no rows to build a matrix from")
    X = np.array([[r.values[n] for n in feature_names] for r in rows],
                 dtype=np.float64)
    y = np.array([r.label for r in rows], dtype=np.int64)
    pids = [r.patient_id for r in rows]
    return X, y, pids


_ROW_HEADER = ["patient_id", "hour_index", "label", "mean_bsqi",
               *FEATURE_NAMES]


def save_rows(path, rows: list[FeatureRow]) -> None:
    """Feature rows as CSV; missing values become empty cells."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_ROW_HEADER)
        for r in rows:
            cells = [r.patient_id, str(r.hour_index), str(r.label),
                     repr(r.mean_bsqi)]
            for name in FEATURE_NAMES:
                cells.append("" if name in r.missing
                             else repr(r.values[name]))
            w.writerow(cells)


def load_rows(path) -> list[FeatureRow]:
    """Parse a feature-row CSV written by :func:`save_rows`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _ROW_HEADER:
            raise ValueError(f"unrecognized feature file header in {path}")
        rows = []
        for cells in reader:
            pid, hour, label, bsqi, *feat = cells
            values: dict[str, float] = {}
            missing = set()
            for name, cell in zip(FEATURE_NAMES, feat):
                if cell == "":
                    values[name] = float("nan")
                    missing.add(name)
                else:
                    values[name] = float(cell)
            rows.append(FeatureRow(
                patient_id=pid, hour_index=int(hour), values=values,
                missing=frozenset(missing), label=int(label),
                mean_bsqi=float(bsqi)))
    return rows
