import numpy as np
import pytest

import _oracles as oracles
from ecgtriage.cohort import EcgRecord
from ecgtriage.preprocess import (BeatSeries, bandpass, detect_rpeaks_primary,
                                  detect_rpeaks_secondary)
from ecgtriage.quality import (SqiSeries, bsqi, hour_quality_gate,
                               matched_count, windowed_sqi)
from ecgtriage.synth import NoiseBurst, SynthProfile, synth_record

FS = 250.0


def _beats(times_s, fs=FS):
    samples = np.unique(np.round(np.asarray(times_s) * fs).astype(np.int64))
    return BeatSeries(r_samples=samples, fs=fs)


class TestBsqi:
    def test_identical_series(self):
        a = _beats([1.0, 2.0, 3.0])
        assert bsqi(a, a) == 1.0

    def test_disjoint_series(self):
        a = _beats([1.0, 2.0, 3.0])
        b = _beats([1.2, 2.2, 3.2])
        assert bsqi(a, b) == 0.0

    def test_hand_matched_example(self):
        a = _beats([1.000, 2.000, 3.000])
        b = _beats([1.005, 2.500])
        assert bsqi(a, b) == pytest.approx(1.0 / (3 + 2 - 1))

    def test_both_empty_is_one(self):
        empty = _beats([])
        assert bsqi(empty, empty) == 1.0
        assert bsqi(empty, _beats([1.0])) == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            a = _beats(np.sort(rng.uniform(0, 30, size=rng.integers(0, 40))))
            b = _beats(np.sort(rng.uniform(0, 30, size=rng.integers(0, 40))))
            assert bsqi(a, b) == pytest.approx(bsqi(b, a))

    def test_unmatched_peak_strictly_decreases(self):
        a = _beats([1.0, 2.0, 3.0])
        b = _beats([1.0, 2.0, 3.0, 10.0])
        assert bsqi(a, b) < bsqi(a, a)

    def test_greedy_matching_attains_bipartite_optimum(self):
        # earliest-available greedy must never fall below the exhaustive
        # optimum on interval graphs with a uniform tolerance
        rng = np.random.default_rng(123)
        for _ in range(60):
            a = np.sort(rng.uniform(0, 8, size=rng.integers(0, 25)))
            b = np.sort(rng.uniform(0, 8, size=rng.integers(0, 25)))
            got = matched_count(a, b, agree_s=0.05)
            want = oracles.max_matching(list(a), list(b), tol=0.05)
            assert got == want


@pytest.fixture(scope="module")
def hour_with_burst():
    profile = SynthProfile(
        duration_s=3600.0, noise_mv=0.01,
        noise_bursts=[NoiseBurst(1200.0, 300.0, sigma_mv=2.0)])
    return synth_record(profile, seed=13)


class TestWindowedSqi:
    def test_clean_hour_all_windows_high(self, clean_600s):
        bp = bandpass(clean_600s.record)
        sqi = windowed_sqi(bp, detect_rpeaks_primary(bp),
                           detect_rpeaks_secondary(bp))
        assert sqi.values.min() >= 0.95

    def test_burst_windows_flagged(self, hour_with_burst):
        bp = bandpass(hour_with_burst.record)
        sqi = windowed_sqi(bp, detect_rpeaks_primary(bp),
                           detect_rpeaks_secondary(bp))
        assert sqi.values.size == 60
        burst = np.zeros(60, dtype=bool)
        burst[20:25] = True  # 1200-1500 s
        assert np.all(sqi.values[burst] < 0.8)
        assert np.all(sqi.values[~burst] >= 0.8)

    def test_empty_tail_window_is_one(self):
        # 90 s record, beats only in the first minute
        x = np.zeros(int(90 * FS))
        rec = EcgRecord("p", "s", FS, 0.0, x)
        a = _beats(np.arange(1.0, 59.0, 1.0))
        sqi = windowed_sqi(rec, a, a)
        assert sqi.values.tolist() == [1.0, 1.0]

    def test_window_lookup(self):
        rec = EcgRecord("p", "s", FS, 0.0, np.zeros(int(180 * FS)))
        empty = _beats([])
        sqi = windowed_sqi(rec, empty, empty)
        assert sqi.window_of(59.9) == 0
        assert sqi.window_of(60.0) == 1
        assert sqi.value_at(130.0) == 1.0


class TestHourGate:
    def test_all_high_passes(self):
        assert hour_quality_gate(SqiSeries(values=np.full(60, 0.9), window_s=60.0))

    def test_all_marginal_fails(self):
        assert not hour_quality_gate(
            SqiSeries(values=np.full(60, 0.79), window_s=60.0))

    def test_mixed_mean_fails(self):
        vals = np.concatenate([np.ones(30), np.full(30, 0.5)])
        assert not hour_quality_gate(SqiSeries(values=vals, window_s=60.0))

    def test_empty_fails(self):
        assert not hour_quality_gate(SqiSeries(values=np.array([]),
                                               window_s=60.0))
