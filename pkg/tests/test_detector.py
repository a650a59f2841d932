"""Rate-threshold detector: baseline lag, sustain rule, event scoring."""

from __future__ import annotations

import numpy as np
import pytest

from ecgtriage.cohort import SeizureEvent
from ecgtriage.detector import (
    Detection,
    EventMatchReport,
    baseline_hr,
    detection_table,
    match_events,
    osorio_detect,
    sqi_suppress,
)
from ecgtriage.errors import InsufficientDataError
from ecgtriage.quality import SqiSeries

from conftest import make_nn


def _nn_segments(*segments: tuple[float, float]):
    """Beats from (hr_bpm, duration_s) stretches laid end to end."""
    chunks = []
    for hr, dur in segments:
        nn = 60e3 / hr
        chunks.extend([nn] * int(round(dur * 1e3 / nn)))
    return make_nn(np.array(chunks))


class TestBaseline:
    def test_constant_hr_is_identity(self):
        nn = _nn_segments((100.0, 300.0))
        base = baseline_hr(nn)
        assert np.allclose(base, 100.0)

    def test_step_lags_half_the_window(self):
        nn = _nn_segments((100.0, 200.0), (130.0, 110.0))
        base = baseline_hr(nn)
        # new rhythm starts where the last long interval ends
        t_step = nn.t_s[np.argmax(nn.nn_ms < 500.0) - 1]
        crossed = np.flatnonzero(base > 115.0)
        assert crossed.size > 0
        first = nn.t_s[crossed[0]]
        # a time-weighted median over a 120 s trailing window cannot
        # flip before the new rhythm has filled half of it; a
        # beat-count median would flip ~8 s early at this rate pair
        assert first - t_step >= 60.0 - 0.6
        assert first - t_step <= 65.0
        assert np.allclose(base[crossed[-1]], 130.0)

    def test_single_spike_leaves_baseline_alone(self):
        nn_ms = np.full(300, 600.0)
        nn_ms[150] = 400.0
        base = baseline_hr(make_nn(nn_ms))
        assert np.allclose(base, 100.0)

    def test_short_series_rejected(self):
        with pytest.raises(InsufficientDataError):
            baseline_hr(_nn_segments((100.0, 100.0)))


class TestOsorioDetect:
    def test_twenty_percent_episode_splits_the_modes(self):
        nn = _nn_segments((100.0, 300.0), (120.0, 30.0), (100.0, 120.0))
        d15 = osorio_detect(nn, "osorio15")
        d30 = osorio_detect(nn, "osorio30")
        assert len(d15) == 1
        assert d15[0].t_s == pytest.approx(300.0, abs=2.0)
        assert d15[0].mode == "osorio15"
        assert not d15[0].suppressed
        assert d30 == []

    def test_sustained_thirty_five_percent_fires_both(self):
        nn = _nn_segments((100.0, 300.0), (135.0, 6.2), (100.0, 120.0))
        assert len(osorio_detect(nn, "osorio15")) == 1
        assert len(osorio_detect(nn, "osorio30")) == 1

    def test_brief_thirty_five_percent_fires_sensitive_only(self):
        nn = _nn_segments((100.0, 300.0), (135.0, 3.0), (100.0, 120.0))
        assert len(osorio_detect(nn, "osorio15")) == 1
        assert osorio_detect(nn, "osorio30") == []

    def test_rearm_after_recovery(self):
        nn = _nn_segments((100.0, 300.0), (125.0, 20.0), (100.0, 100.0),
                          (125.0, 20.0), (100.0, 100.0))
        d15 = osorio_detect(nn, "osorio15")
        assert len(d15) == 2
        assert d15[1].t_s - d15[0].t_s == pytest.approx(120.0, abs=3.0)

    def test_strict_onsets_lie_above_sensitive_threshold(self):
        rng = np.random.default_rng(5)
        nn_ms = 500.0 * np.exp(rng.normal(0.0, 0.03, 900))
        nn_ms[400:460] /= 1.4
        nn_ms[700:720] /= 1.32
        nn = make_nn(nn_ms)
        base = baseline_hr(nn)
        hr = 60e3 / nn.nn_ms
        d30 = osorio_detect(nn, "osorio30")
        assert d30, "episodes should trigger the strict mode"
        for d in d30:
            i = int(np.argmin(np.abs(nn.t_s - d.t_s)))
            assert hr[i] > 1.15 * base[i]

    def test_unknown_mode_rejected(self):
        nn = _nn_segments((100.0, 200.0))
        with pytest.raises(ValueError):
            osorio_detect(nn, "osorio20")
        with pytest.raises(ValueError):
            Detection(t_s=1.0, mode="nope")


class TestSqiSuppress:
    def test_flags_follow_window_quality(self):
        sqi = SqiSeries(values=np.array([1.0, 0.5, 0.9]), window_s=60.0)
        dets = [Detection(t_s=30.0, mode="osorio15"),
                Detection(t_s=70.0, mode="osorio15"),
                Detection(t_s=130.0, mode="osorio15")]
        out = sqi_suppress(dets, sqi)
        assert [d.suppressed for d in out] == [False, True, False]
        assert len(out) == len(dets)
        assert [d.t_s for d in out] == [d.t_s for d in dets]

    def test_outside_coverage_is_kept(self):
        sqi = SqiSeries(values=np.array([0.9]), window_s=60.0)
        out = sqi_suppress([Detection(t_s=400.0, mode="osorio30")], sqi)
        assert not out[0].suppressed

    def test_threshold_boundary(self):
        sqi = SqiSeries(values=np.array([0.8]), window_s=60.0)
        out = sqi_suppress([Detection(t_s=10.0, mode="osorio15")], sqi)
        assert not out[0].suppressed  # gate is strictly-below


def _ref(start: float, end: float) -> SeizureEvent:
    return SeizureEvent(patient_id="p", t_start_s=start, t_end_s=end)


class TestMatchEvents:
    def test_detection_before_start_counts(self):
        r = match_events([Detection(t_s=70.0, mode="osorio15")],
                         [_ref(100.0, 160.0)])
        assert (r.tp, r.fp, r.fn) == (1, 0, 0)
        assert r.se == 1.0 and r.ppv == 1.0

    def test_detection_past_window_is_false_positive(self):
        r = match_events([Detection(t_s=250.0, mode="osorio15")],
                         [_ref(100.0, 160.0)])
        assert (r.tp, r.fp, r.fn) == (0, 1, 1)
        assert r.se == 0.0 and r.ppv == 0.0

    def test_no_detections_two_references(self):
        r = match_events([], [_ref(10.0, 20.0), _ref(50.0, 60.0)])
        assert (r.tp, r.fp, r.fn) == (0, 0, 2)
        assert r.se == 0.0
        assert r.ppv is None

    def test_suppressed_detections_do_not_score(self):
        r = match_events([Detection(t_s=110.0, mode="osorio15",
                                    suppressed=True)],
                         [_ref(100.0, 160.0)])
        assert (r.tp, r.fp, r.fn) == (0, 0, 1)
        assert r.ppv is None

    def test_repeat_alarms_credit_reference_once(self):
        dets = [Detection(t_s=t, mode="osorio15")
                for t in (90.0, 120.0, 150.0, 400.0)]
        r = match_events(dets, [_ref(100.0, 160.0)])
        assert (r.tp, r.fp, r.fn) == (1, 1, 0)
        assert r.matched_detections == 3
        assert r.se == 1.0
        assert r.ppv == pytest.approx(0.75)

    def test_one_alarm_may_credit_overlapping_references(self):
        r = match_events([Detection(t_s=100.0, mode="osorio15")],
                         [_ref(90.0, 120.0), _ref(110.0, 150.0)])
        assert (r.tp, r.fn) == (2, 0)
        assert r.matched_detections == 1
        assert r.ppv == 1.0

    def test_reference_count_invariant(self):
        rng = np.random.default_rng(7)
        refs = [_ref(float(s), float(s) + 20.0)
                for s in rng.uniform(0, 3000, 12)]
        dets = [Detection(t_s=float(t), mode="osorio30")
                for t in rng.uniform(0, 3200, 40)]
        r = match_events(dets, refs)
        assert r.tp + r.fn == len(refs)
        assert 0.0 <= r.se <= 1.0
        assert 0.0 <= r.ppv <= 1.0


class TestEndToEnd:
    def test_clean_record_with_episodes(self):
        rng = np.random.default_rng(17)
        nn_ms = 500.0 * np.exp(rng.normal(0.0, 0.015, 1200))
        t = np.cumsum(nn_ms) / 1e3
        refs = []
        for start in (200.0, 400.0):
            sel = (t >= start) & (t < start + 30.0)
            nn_ms[sel] /= 1.35
            refs.append(_ref(start, start + 30.0))
        nn = make_nn(nn_ms)
        sqi = SqiSeries(values=np.ones(11), window_s=60.0)
        reports = {}
        for mode in ("osorio15", "osorio30"):
            dets = sqi_suppress(osorio_detect(nn, mode), sqi)
            reports[mode] = match_events(dets, refs)
        assert reports["osorio15"].se == 1.0
        assert reports["osorio30"].se == 1.0
        table = detection_table(reports)
        lines = table.strip().split("\n")
        assert lines[0] == "mode,TP,FP,FN,Se,PPV"
        assert lines[1].startswith("osorio15,2,")
        assert len(lines) == 3

    def test_table_flags_undefined_ppv(self):
        rep = EventMatchReport(tp=0, fp=0, fn=2, se=0.0, ppv=None,
                               matched_detections=0)
        table = detection_table({"osorio30": rep})
        assert table.strip().split("\n")[1] == "osorio30,0,0,2,0.000,"
