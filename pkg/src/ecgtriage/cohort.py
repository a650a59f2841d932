"""Cohort data model: ECG segments, seizure annotations, clinical metadata.

A cohort on disk is a directory with

    ecg/<patient>__<segment>.csv   (header ``t_s,mv``) or .npy, plus a
    ecg/<patient>__<segment>.json  sidecar {patient_id, segment_id, fs, start_offset}
    annotations.jsonl              one event per line
    metadata.csv                   one row per patient, Table-style clinical columns

All times are seconds from admission start; ECG amplitudes are millivolts.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import CohortIntegrityError, CohortParseError

logger = logging.getLogger(__name__)

#: Clinical metadata columns, in serialization order. The first two are age in
#: years and gender; the rest are ternary flags (1/0/missing).
META_COLUMNS: list[str] = [
    "Age", "Gender", "DevDelay", "Epilepsy", "PreDxNa", "Seizure",
    "EtSeiz", "SeizPrim", "EtBrainInj", "BrainInjPrim", "EtMetab",
    "MetPrim", "EtSyst", "SysPrim", "EtSed", "SedPrim",
]

_META_ATTRS: list[str] = [
    "age", "gender", "dev_delay", "epilepsy", "pre_dx_na", "seizure",
    "et_seiz", "seiz_prim", "et_brain_inj", "brain_inj_prim", "et_metab",
    "met_prim", "et_syst", "sys_prim", "et_sed", "sed_prim",
]

#: Label horizon: only events starting inside the first 48 h count.
LABEL_HORIZON_S = 48 * 3600.0
#: Label duration threshold: an event must be strictly longer than 5 min.
LABEL_MIN_DURATION_S = 300.0


class Manifestation(str, Enum):
    SUBCLINICAL = "subclinical"
    CLINICAL = "clinical"
    UNKNOWN = "unknown"


class Label(str, Enum):
    SEIZURE = "seizure"
    NON_SEIZURE = "non_seizure"


@dataclass(eq=False)
class EcgRecord:
    """One continuous ECG segment of one patient."""

    patient_id: str
    segment_id: str
    fs: float
    start_offset_s: float
    samples_mv: np.ndarray

    def __post_init__(self):
        self.samples_mv = np.asarray(self.samples_mv, dtype=np.float64)
        if self.fs <= 0:
            raise ValueError(f"fs must be positive, got {self.fs}")
        if self.samples_mv.ndim != 1 or self.samples_mv.size == 0:
            raise ValueError("samples_mv must be a non-empty 1-D array")
        if self.start_offset_s < 0:
            raise ValueError("start_offset_s must be >= 0")

    @property
    def duration_s(self) -> float:
        return self.samples_mv.size / self.fs

    @property
    def t_s(self) -> np.ndarray:
        """Absolute sample times in seconds from admission start."""
        return self.start_offset_s + np.arange(self.samples_mv.size) / self.fs

    def equals(self, other: "EcgRecord") -> bool:
        return (
            self.patient_id == other.patient_id
            and self.segment_id == other.segment_id
            and self.fs == other.fs
            and self.start_offset_s == other.start_offset_s
            and np.array_equal(self.samples_mv, other.samples_mv)
        )


@dataclass(frozen=True)
class SeizureEvent:
    patient_id: str
    t_start_s: float
    t_end_s: float
    manifestation: Manifestation = Manifestation.UNKNOWN

    def __post_init__(self):
        if self.t_start_s < 0:
            raise ValueError("t_start_s must be >= 0")
        if self.t_end_s <= self.t_start_s:
            raise ValueError("t_end_s must be > t_start_s")

    @property
    def duration_s(self) -> float:
        return self.t_end_s - self.t_start_s


@dataclass
class PatientMeta:
    """Clinical metadata for one patient.

    ``None`` flags are the explicit missing state; they encode to 0 when the
    metadata is turned into model features.
    """

    patient_id: str
    age: float
    gender: int | None = None
    dev_delay: int | None = None
    epilepsy: int | None = None
    pre_dx_na: int | None = None
    seizure: int | None = None
    et_seiz: int | None = None
    seiz_prim: int | None = None
    et_brain_inj: int | None = None
    brain_inj_prim: int | None = None
    et_metab: int | None = None
    met_prim: int | None = None
    et_syst: int | None = None
    sys_prim: int | None = None
    et_sed: int | None = None
    sed_prim: int | None = None

    def __post_init__(self):
        if self.age is None or self.age < 0:
            raise ValueError(f"age must be a non-negative number, got {self.age}")
        for col, attr in zip(META_COLUMNS[1:], _META_ATTRS[1:]):
            v = getattr(self, attr)
            if v is not None and v not in (0, 1):
                raise ValueError(f"{col} must be 0, 1 or missing, got {v!r}")

    @classmethod
    def flag_attrs(cls) -> tuple[str, ...]:
        """Attribute names of the 14 ternary flags (age and gender excluded)."""
        return tuple(_META_ATTRS[2:])

    def feature_values(self) -> dict[str, float]:
        """Numeric feature encoding; missing flags become 0."""
        out: dict[str, float] = {}
        for col, attr in zip(META_COLUMNS, _META_ATTRS):
            v = getattr(self, attr)
            out[col] = float(v) if v is not None else 0.0
        return out


@dataclass(frozen=True)
class PatientLabel:
    patient_id: str
    label: Label


def label_patient(
    patient_id: str,
    events: Sequence[SeizureEvent],
    horizon_s: float = LABEL_HORIZON_S,
    min_duration_s: float = LABEL_MIN_DURATION_S,
) -> PatientLabel:
    """Patient-level label from that patient's annotated events.

    Seizure patient iff some event lasts strictly longer than
    ``min_duration_s`` and starts strictly before ``horizon_s``. Both
    boundaries are exclusive: a 5-minute event, or one starting exactly at
    the horizon, does not qualify.
    """
    label = Label.NON_SEIZURE
    for ev in events:
        if ev.patient_id != patient_id:
            raise ValueError(f"event of patient {ev.patient_id!r} passed while "
                             f"labeling {patient_id!r}")
        if ev.duration_s > min_duration_s and ev.t_start_s < horizon_s:
            label = Label.SEIZURE
    return PatientLabel(patient_id=patient_id, label=label)


@dataclass
class Cohort:
    records: list[EcgRecord]
    events: list[SeizureEvent]
    meta: dict[str, PatientMeta]

    @property
    def patient_ids(self) -> list[str]:
        return sorted(self.meta)

    def records_of(self, patient_id: str) -> list[EcgRecord]:
        return [r for r in self.records if r.patient_id == patient_id]

    def events_of(self, patient_id: str) -> list[SeizureEvent]:
        return [e for e in self.events if e.patient_id == patient_id]

    def labels(self, horizon_s: float = LABEL_HORIZON_S,
               min_duration_s: float = LABEL_MIN_DURATION_S) -> dict[str, Label]:
        by_patient: dict[str, list[SeizureEvent]] = {p: [] for p in self.meta}
        for ev in self.events:
            by_patient[ev.patient_id].append(ev)
        return {p: label_patient(p, evs, horizon_s, min_duration_s).label
                for p, evs in by_patient.items()}


def _canonical_order(cohort: Cohort) -> Cohort:
    records = sorted(cohort.records,
                     key=lambda r: (r.patient_id, r.start_offset_s, r.segment_id))
    events = sorted(cohort.events,
                    key=lambda e: (e.patient_id, e.t_start_s, e.t_end_s))
    meta = {p: cohort.meta[p] for p in sorted(cohort.meta)}
    return Cohort(records=records, events=events, meta=meta)


# ---------------------------------------------------------------- loading

def _parse_sidecar(path: Path) -> dict:
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CohortParseError(f"invalid JSON sidecar: {exc}", path=str(path)) from exc
    for key in ("patient_id", "segment_id", "fs", "start_offset"):
        if key not in raw:
            raise CohortParseError(f"sidecar missing key {key!r}", path=str(path))
    return raw


def _load_record(data_path: Path, sidecar: dict | None) -> EcgRecord:
    if data_path.suffix == ".npy":
        if sidecar is None:
            raise CohortParseError("binary segment requires a JSON sidecar",
                                   path=str(data_path))
        samples = np.load(data_path)
        return EcgRecord(sidecar["patient_id"], sidecar["segment_id"],
                         float(sidecar["fs"]), float(sidecar["start_offset"]), samples)
    try:
        # round_trip: re-serializing a loaded cohort must be byte-stable
        frame = pd.read_csv(data_path, dtype=np.float64,
                            float_precision="round_trip")
    except Exception as exc:
        raise CohortParseError(f"unreadable ECG csv: {exc}", path=str(data_path)) from exc
    if list(frame.columns) != ["t_s", "mv"]:
        raise CohortParseError(
            f"ECG csv must have header 't_s,mv', got {list(frame.columns)}",
            path=str(data_path), line=1)
    samples = frame["mv"].to_numpy()
    if sidecar is not None:
        return EcgRecord(sidecar["patient_id"], sidecar["segment_id"],
                         float(sidecar["fs"]), float(sidecar["start_offset"]), samples)
    # No sidecar: identity from the file name, timing from the time column.
    stem = data_path.stem
    if "__" not in stem:
        raise CohortParseError("cannot infer ids: file name must be "
                               "<patient>__<segment>.csv", path=str(data_path))
    patient_id, segment_id = stem.split("__", 1)
    t = frame["t_s"].to_numpy()
    if t.size < 2:
        raise CohortParseError("need >= 2 samples to infer fs", path=str(data_path))
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-6, atol=1e-9):
        raise CohortParseError("time column is not uniformly sampled",
                               path=str(data_path))
    return EcgRecord(patient_id, segment_id, 1.0 / float(np.median(dt)),
                     float(t[0]), samples)


def _load_events(path: Path) -> list[SeizureEvent]:
    events = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CohortParseError(f"invalid JSON: {exc}",
                                       path=str(path), line=line_no) from exc
            if not isinstance(raw, dict):
                raise CohortParseError("annotation line is not an object",
                                       path=str(path), line=line_no)
            missing = {"patient_id", "t_start", "t_end"} - raw.keys()
            if missing:
                raise CohortParseError(f"annotation missing keys {sorted(missing)}",
                                       path=str(path), line=line_no)
            try:
                man = Manifestation(raw.get("manifestation", "unknown"))
            except ValueError:
                raise CohortParseError(
                    f"unknown manifestation {raw.get('manifestation')!r}",
                    path=str(path), line=line_no) from None
            try:
                ev = SeizureEvent(str(raw["patient_id"]), float(raw["t_start"]),
                                  float(raw["t_end"]), man)
            except (TypeError, ValueError) as exc:
                raise CohortParseError(f"bad annotation: {exc}",
                                       path=str(path), line=line_no) from exc
            events.append(ev)
    return events


def _meta_cell(text: str, column: str, path: Path, line_no: int) -> float | None:
    text = text.strip()
    if text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise CohortParseError(f"non-numeric value {text!r} in column {column}",
                               path=str(path), line=line_no) from None
    return value


def _load_meta(path: Path) -> dict[str, PatientMeta]:
    meta: dict[str, PatientMeta] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortParseError("empty metadata file", path=str(path), line=1) from None
        expected = ["patient_id"] + META_COLUMNS
        if header != expected:
            raise CohortParseError(
                f"metadata header must be {expected}, got {header}",
                path=str(path), line=1)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise CohortParseError(
                    f"expected {len(expected)} cells, got {len(row)}",
                    path=str(path), line=line_no)
            pid = row[0].strip()
            if not pid:
                raise CohortParseError("empty patient_id", path=str(path), line=line_no)
            if pid in meta:
                raise CohortParseError(f"duplicate patient_id {pid!r}",
                                       path=str(path), line=line_no)
            values = {attr: _meta_cell(cell, col, path, line_no)
                      for col, attr, cell in zip(META_COLUMNS, _META_ATTRS, row[1:])}
            age = values.pop("age")
            if age is None:
                raise CohortParseError("Age is required", path=str(path), line=line_no)
            flags = {k: (None if v is None else int(v)) for k, v in values.items()}
            try:
                meta[pid] = PatientMeta(patient_id=pid, age=age, **flags)
            except ValueError as exc:
                raise CohortParseError(str(exc), path=str(path), line=line_no) from exc
    return meta


def load_cohort(ecg_path: str | Path, annotations_path: str | Path,
                metadata_path: str | Path) -> Cohort:
    """Load a cohort from an ECG directory, an annotations file, and a
    metadata table.

    Raises
    ------
    CohortParseError
        On malformed files, naming the file and line where possible.
    CohortIntegrityError
        When a segment or annotation references a patient absent from the
        metadata table.
    """
    meta = _load_meta(Path(metadata_path))
    ann_path = Path(annotations_path)
    events = _load_events(ann_path) if ann_path.exists() else []

    records = []
    ecg_dir = Path(ecg_path)
    if ecg_dir.is_dir():
        data_paths = sorted(p for p in ecg_dir.iterdir()
                            if p.suffix in (".csv", ".npy"))
        for data_path in data_paths:
            sidecar_path = data_path.with_suffix(".json")
            sidecar = _parse_sidecar(sidecar_path) if sidecar_path.exists() else None
            records.append(_load_record(data_path, sidecar))

    for rec in records:
        if rec.patient_id not in meta:
            raise CohortIntegrityError(
                f"segment {rec.segment_id!r} references unknown patient "
                f"{rec.patient_id!r}")
    for ev in events:
        if ev.patient_id not in meta:
            raise CohortIntegrityError(
                f"annotation at t={ev.t_start_s:g}s references unknown patient "
                f"{ev.patient_id!r}")

    cohort = _canonical_order(Cohort(records=records, events=events, meta=meta))
    logger.info("loaded cohort: %d patients, %d segments, %d events",
                len(meta), len(records), len(events))
    return cohort


def load_cohort_dir(root: str | Path) -> Cohort:
    """Load the standard directory layout written by :func:`save_cohort`."""
    root = Path(root)
    return load_cohort(root / "ecg", root / "annotations.jsonl",
                       root / "metadata.csv")


# ----------------------------------------------------------------- saving

def _format_cell(v: float | None) -> str:
    if v is None:
        return ""
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def save_cohort(cohort: Cohort, root: str | Path, ecg_format: str = "npy") -> None:
    """Write a cohort directory in canonical (byte-stable) form.

    ``ecg_format`` is ``"npy"`` (compact, exact) or ``"csv"``. Loading the
    written directory and saving it again reproduces the same bytes.
    """
    if ecg_format not in ("npy", "csv"):
        raise ValueError(f"ecg_format must be 'npy' or 'csv', got {ecg_format!r}")
    root = Path(root)
    cohort = _canonical_order(cohort)
    ecg_dir = root / "ecg"
    ecg_dir.mkdir(parents=True, exist_ok=True)

    for rec in cohort.records:
        stem = f"{rec.patient_id}__{rec.segment_id}"
        sidecar = {"patient_id": rec.patient_id, "segment_id": rec.segment_id,
                   "fs": rec.fs, "start_offset": rec.start_offset_s}
        (ecg_dir / f"{stem}.json").write_text(
            json.dumps(sidecar, sort_keys=True) + "\n")
        if ecg_format == "npy":
            np.save(ecg_dir / f"{stem}.npy", rec.samples_mv)
        else:
            with open(ecg_dir / f"{stem}.csv", "w") as fh:
                fh.write("t_s,mv\n")
                t = rec.t_s
                fh.writelines(f"{float(ti)!r},{float(vi)!r}\n"
                              for ti, vi in zip(t, rec.samples_mv))

    with open(root / "annotations.jsonl", "w") as fh:
        for ev in cohort.events:
            fh.write(json.dumps({
                "patient_id": ev.patient_id,
                "t_start": ev.t_start_s,
                "t_end": ev.t_end_s,
                "manifestation": ev.manifestation.value,
            }, sort_keys=True) + "\n")

    with open(root / "metadata.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["patient_id"] + META_COLUMNS)
        for pid, m in cohort.meta.items():
            cells = [_format_cell(getattr(m, attr)) for attr in _META_ATTRS]
            writer.writerow([pid] + cells)


def events_by_patient(events: Iterable[SeizureEvent]) -> dict[str, list[SeizureEvent]]:
    out: dict[str, list[SeizureEvent]] = {}
    for ev in events:
        out.setdefault(ev.patient_id, []).append(ev)
    return out
