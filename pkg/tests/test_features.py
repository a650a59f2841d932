"""Hourly feature rows and dataset assembly."""

import math

import numpy as np
import pytest

from ecgtriage.cohort import Cohort, EcgRecord, Label, META_COLUMNS
from ecgtriage.errors import CohortIntegrityError, InsufficientDataError
from ecgtriage.features import (
    ECG_FEATURE_NAMES,
    FEATURE_NAMES,
    FeatureRow,
    HourFeatures,
    build_dataset,
    design_matrix,
    extract_hour,
    first_passing_hours,
    hour_slices,
)
from ecgtriage.hrv import HRV_FEATURE_NAMES
from ecgtriage.morphology import MOR_FEATURE_NAMES
from ecgtriage.synth import CohortProfile, synth_cohort


def _stub_record(pid, seg="s0", hours=1.0, fs=1.0, offset=0.0):
    n = int(round(hours * 3600 * fs))
    return EcgRecord(pid, seg, fs=fs, start_offset_s=offset,
                     samples_mv=np.zeros(n))


def _row(pid="p0", hour=0, label=0, bsqi=0.95, missing=()):
    values = {n: 1.0 for n in FEATURE_NAMES}
    for n in missing:
        values[n] = float("nan")
    return FeatureRow(patient_id=pid, hour_index=hour, values=values,
                      missing=frozenset(missing), label=label, mean_bsqi=bsqi)


class TestNames:
    def test_block_layout(self):
        assert len(FEATURE_NAMES) == 116
        assert len(set(FEATURE_NAMES)) == 116
        assert FEATURE_NAMES[:16] == tuple(META_COLUMNS)
        assert FEATURE_NAMES[16:42] == HRV_FEATURE_NAMES
        assert FEATURE_NAMES[42:] == MOR_FEATURE_NAMES
        assert ECG_FEATURE_NAMES == HRV_FEATURE_NAMES + MOR_FEATURE_NAMES


class TestFeatureRow:
    def test_round_trip_vector(self):
        row = _row(missing=("SDNN",))
        vec = row.as_vector()
        assert vec.shape == (116,)
        assert math.isnan(vec[FEATURE_NAMES.index("SDNN")])
        assert vec[FEATURE_NAMES.index("Age")] == 1.0

    def test_rejects_bad_hour(self):
        with pytest.raises(ValueError, match="hour_index"):
            _row(hour=48)

    def test_rejects_unknown_name(self):
        values = {n: 1.0 for n in FEATURE_NAMES}
        values["Bogus"] = 2.0
        with pytest.raises(ValueError, match="unknown"):
            FeatureRow("p0", 0, values, frozenset(), 0, 0.9)

    def test_rejects_unflagged_nan(self):
        values = {n: 1.0 for n in FEATURE_NAMES}
        values["SDNN"] = float("nan")
        with pytest.raises(ValueError, match="not flagged"):
            FeatureRow("p0", 0, values, frozenset(), 0, 0.9)

    def test_rejects_flagged_value(self):
        with pytest.raises(ValueError, match="flagged missing"):
            values = {n: 1.0 for n in FEATURE_NAMES}
            FeatureRow("p0", 0, values, frozenset({"SDNN"}), 0, 0.9)

    def test_rejects_missing_metadata_feature(self):
        values = {n: 1.0 for n in FEATURE_NAMES}
        values["Age"] = float("nan")
        with pytest.raises(ValueError, match="ECG-derived"):
            FeatureRow("p0", 0, values, frozenset({"Age"}), 0, 0.9)

    def test_rejects_nonbinary_label(self):
        with pytest.raises(ValueError, match="label"):
            _row(label=2)


class TestHourSlices:
    def test_full_day_tiles_hours(self):
        rec = _stub_record("p0", hours=3.0)
        got = list(hour_slices(rec))
        assert [h for h, _ in got] == [0, 1, 2]
        for h, sub in got:
            assert sub.start_offset_s == h * 3600.0
            assert sub.duration_s == 3600.0
            assert sub.patient_id == "p0"

    def test_offset_segment_lands_in_its_hours(self):
        rec = _stub_record("p0", hours=1.0, offset=1800.0)
        got = list(hour_slices(rec))
        assert [h for h, _ in got] == [0, 1]
        assert got[0][1].duration_s == 1800.0
        assert got[1][1].start_offset_s == 3600.0

    def test_short_fragments_skipped(self):
        rec = _stub_record("p0", hours=300 / 3600, offset=3300.0)
        assert list(hour_slices(rec)) == []

    def test_max_hours_caps_late_segments(self):
        rec = _stub_record("p0", hours=2.0, offset=47 * 3600.0)
        got = list(hour_slices(rec, max_hours=48))
        assert [h for h, _ in got] == [47]

    def test_slice_samples_align(self):
        fs = 2.0
        rec = EcgRecord("p0", "s0", fs=fs, start_offset_s=0.0,
                        samples_mv=np.arange(int(2 * 3600 * fs), dtype=float))
        got = dict(hour_slices(rec))
        assert got[1].samples_mv[0] == 3600 * fs


class TestExtractHour:
    def test_clean_hour_yields_full_row(self):
        profile = CohortProfile(n_patients=1, n_seizure=0, duration_s=640.0)
        syn = synth_cohort(profile, seed=5)
        rec = syn.cohort.records_of(syn.cohort.patient_ids[0])[0]
        (_, sub), = list(hour_slices(rec))
        hf = extract_hour(sub)
        assert hf.mean_bsqi >= 0.85
        assert "AVNN" not in hf.missing
        assert 250.0 <= hf.values["AVNN"] <= 1500.0
        assert "DmedQRS" not in hf.missing
        assert hf.values["bSQI"] == pytest.approx(hf.mean_bsqi)

    def test_flat_hour_degrades_to_flagged_missing(self):
        rec = _stub_record("p0", hours=700 / 3600, fs=250.0)
        hf = extract_hour(rec)
        assert hf.missing == frozenset(ECG_FEATURE_NAMES)
        # No beats from either detector: agreement is vacuously perfect.
        assert hf.mean_bsqi == 1.0

    def test_noise_hour_fails_gate(self):
        rng = np.random.default_rng(3)
        rec = EcgRecord("p0", "s0", fs=250.0, start_offset_s=0.0,
                        samples_mv=rng.normal(0.0, 0.5, 250 * 700))
        hf = extract_hour(rec)
        assert hf.mean_bsqi < 0.8


def _schedule_cohort(plans, label_flags):
    """Cohort of one 48 h stub record per patient plus a schedule extractor.

    ``plans`` is one boolean hour schedule per patient; synthesized patient
    ids are assigned in order. Returns ``(cohort, pids, labels, extractor)``.
    """
    syn = synth_cohort(CohortProfile(n_patients=len(plans), n_seizure=0,
                                     duration_s=1200.0), seed=9, render=False)
    pids = syn.cohort.patient_ids
    by_pid = dict(zip(pids, plans))
    records = [_stub_record(pid, hours=48.0, fs=0.05) for pid in pids]
    cohort = Cohort(records=records, events=[], meta=syn.cohort.meta)
    labels = {pid: Label.SEIZURE if flag else Label.NON_SEIZURE
              for pid, flag in zip(pids, label_flags)}

    def extractor(sub):
        h = int(sub.start_offset_s // 3600)
        ok = by_pid[sub.patient_id][h]
        return HourFeatures(values={n: 1.0 for n in ECG_FEATURE_NAMES},
                            missing=frozenset(),
                            mean_bsqi=0.97 if ok else 0.2)

    return cohort, pids, labels, extractor


class TestBuildDataset:
    def test_schedule_drives_rows(self):
        plans = [
            [True, False, True] + [False] * 45,
            [False] * 48,
            [False, True] + [False] * 46,
        ]
        cohort, pids, labels, extractor = _schedule_cohort(plans, [1, 0, 0])
        rows = build_dataset(cohort, labels=labels, extractor=extractor)
        got = {(r.patient_id, r.hour_index) for r in rows}
        assert got == {(pids[0], 0), (pids[0], 2), (pids[2], 1)}
        by_pid = {r.patient_id: r for r in rows}
        assert by_pid[pids[0]].label == 1
        assert by_pid[pids[2]].label == 0
        # Zero-passing patients vanish from the dataset entirely.
        assert pids[1] not in by_pid

    def test_first_passing_hours(self):
        plans = [[False, True, True] + [False] * 45,
                 [True] + [False] * 47]
        cohort, pids, labels, extractor = _schedule_cohort(plans, [0, 1])
        rows = build_dataset(cohort, labels=labels, extractor=extractor)
        firsts = first_passing_hours(rows)
        assert {(r.patient_id, r.hour_index) for r in firsts} == {
            (pids[0], 1), (pids[1], 0)}

    def test_empty_cohort_rejected(self):
        cohort = Cohort(records=[], events=[], meta={})
        with pytest.raises(InsufficientDataError, match="no patients"):
            build_dataset(cohort)

    def test_all_failing_rejected(self):
        cohort, _, labels, extractor = _schedule_cohort([[False] * 48], [0])
        with pytest.raises(InsufficientDataError, match="quality gate"):
            build_dataset(cohort, labels=labels, extractor=extractor)

    def test_overlapping_segments_rejected(self):
        cohort, pids, labels, extractor = _schedule_cohort([[True] * 48], [0])
        dup = Cohort(records=cohort.records + [
            _stub_record(pids[0], seg="s1", hours=2.0, fs=0.05)],
            events=[], meta=cohort.meta)
        with pytest.raises(CohortIntegrityError, match="two segments"):
            build_dataset(dup, labels=labels, extractor=extractor)

    def test_design_matrix_shapes(self):
        plans = [[True, True] + [False] * 46, [True] + [False] * 47]
        cohort, _, labels, extractor = _schedule_cohort(plans, [1, 0])
        rows = build_dataset(cohort, labels=labels, extractor=extractor)
        X, y, pids = design_matrix(rows)
        assert X.shape == (3, 116)
        assert y.tolist() == [r.label for r in rows]
        assert pids == [r.patient_id for r in rows]
        X2, _, _ = design_matrix(rows, feature_names=("Age", "AVNN"))
        assert X2.shape == (3, 2)

    def test_train_row_count_matches_cohort_scale(self):
        # 166 patients, 48 h each, ~31 % noisy hours: the 111-patient
        # training side should carry about 3,667 rows.
        profile = CohortProfile(n_patients=166, n_seizure=22,
                                duration_s=48 * 3600.0, noisy_hour_p=0.31)
        syn = synth_cohort(profile, seed=13, render=False)
        pids = syn.cohort.patient_ids
        records = [_stub_record(pid, hours=48.0, fs=0.05) for pid in pids]
        cohort = Cohort(records=records, events=[], meta=syn.cohort.meta)

        def extractor(sub):
            h = int(sub.start_offset_s // 3600)
            ok = syn.hour_plan[sub.patient_id][h]
            return HourFeatures(values={n: 1.0 for n in ECG_FEATURE_NAMES},
                                missing=frozenset(),
                                mean_bsqi=0.97 if ok else 0.2)

        rows = build_dataset(cohort, labels=syn.labels, extractor=extractor)
        train_pids = set(pids[:111])
        n_train = sum(r.patient_id in train_pids for r in rows)
        assert abs(n_train - 3667) / 3667 < 0.10
