"""Synthetic ECG cohorts with known ground truth.

Each beat is a fixed template of raised-cosine (compact-support) waves placed
on a generated RR sequence, so the generator can hand tests an exact ledger:
true beat times, true RR values and true wave boundaries. Band-limited noise,
tachycardia episodes and noise bursts are planted on top.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .cohort import Cohort, EcgRecord, Label, Manifestation, PatientMeta, SeizureEvent
from .errors import ProfileParameterError
from .utils import derive_seed

logger = logging.getLogger(__name__)

#: Detector refractory floor; an RR below this is unphysiological here.
MIN_RR_S = 0.150

FIDUCIAL_NAMES = ["p_on", "p_peak", "p_off", "qrs_on", "r_peak", "qrs_off",
                  "t_on", "t_peak", "t_off"]

# Template geometry in ms relative to the R peak, at the reference RR of
# 800 ms. Offsets scale with sqrt(RR/0.8); QRS parts additionally with the
# profile's qrs_width_scale. Amplitudes are mV.
_REF_RR_S = 0.8
_P_CENTER, _P_HALF = -0.170, 0.040
_Q_CENTER, _Q_HALF = -0.022, 0.010
_R_HALF = 0.014
_S_CENTER, _S_HALF = 0.024, 0.010
_T_CENTER, _T_HALF = 0.250, 0.080


@dataclass
class TachyEpisode:
    """Step increase of instantaneous HR by ``hr_rise`` (fraction) over a span."""

    onset_s: float
    duration_s: float
    hr_rise: float
    annotate: bool = True
    manifestation: Manifestation = Manifestation.CLINICAL


@dataclass
class NoiseBurst:
    onset_s: float
    duration_s: float
    sigma_mv: float


@dataclass
class SynthProfile:
    patient_id: str = "p0"
    segment_id: str = "s0"
    fs: float = 250.0
    duration_s: float = 600.0
    start_offset_s: float = 0.0
    mean_hr_bpm: float = 100.0
    hrv_rel: float = 0.03
    noise_mv: float = 0.02
    p_amp_mv: float = 0.12
    r_amp_mv: float = 1.0
    q_amp_mv: float = -0.08
    s_amp_mv: float = -0.15
    t_amp_mv: float = 0.30
    qrs_width_scale: float = 1.0
    polarity: int = 1
    age: float = 5.0
    episodes: list[TachyEpisode] = field(default_factory=list)
    noise_bursts: list[NoiseBurst] = field(default_factory=list)
    #: Annotation-only events (absolute seconds); do not touch the signal.
    extra_events: list[tuple[float, float, str]] = field(default_factory=list)
    meta_flags: dict[str, int | None] | None = None


@dataclass
class SynthLedger:
    """Ground truth the generator commits to; tests score against this."""

    beat_t_s: np.ndarray
    rr_s: np.ndarray
    warp: np.ndarray
    fiducials_s: dict[str, np.ndarray]
    episodes: list[tuple[float, float]]
    bursts: list[tuple[float, float]]


@dataclass
class SynthRecord:
    record: EcgRecord
    events: list[SeizureEvent]
    meta: PatientMeta
    ledger: SynthLedger


def _hr_factor(t: float, episodes: list[TachyEpisode]) -> float:
    for ep in episodes:
        if ep.onset_s <= t < ep.onset_s + ep.duration_s:
            return 1.0 + ep.hr_rise
    return 1.0


def _generate_rr(profile: SynthProfile, rng: np.random.Generator):
    """Beat times and RR sequence; raises if any RR hits the refractory floor."""
    base_rr = 60.0 / profile.mean_hr_bpm
    worst_rise = max((ep.hr_rise for ep in profile.episodes), default=0.0)
    if 60.0 / (profile.mean_hr_bpm * (1.0 + worst_rise)) < MIN_RR_S:
        raise ProfileParameterError(
            f"episode HR {profile.mean_hr_bpm * (1 + worst_rise):.0f} bpm implies "
            f"RR below the {MIN_RR_S * 1e3:.0f} ms refractory floor")
    beats = [0.4]
    rrs = [base_rr]
    while True:
        t = beats[-1]
        mod = (0.6 * math.sin(2 * math.pi * 0.095 * t)
               + 0.4 * math.sin(2 * math.pi * 0.275 * t)
               + 0.25 * rng.standard_normal())
        target = base_rr / _hr_factor(t, profile.episodes)
        rr = target * (1.0 + profile.hrv_rel * mod)
        # jitter may not push RR more than ~45% off its local target
        rr = min(max(rr, 0.55 * target), 1.45 * target)
        if rr < MIN_RR_S:
            raise ProfileParameterError(f"generated RR {rr * 1e3:.0f} ms below "
                                        f"the {MIN_RR_S * 1e3:.0f} ms floor")
        if t + rr > profile.duration_s - 0.45:
            break
        beats.append(t + rr)
        rrs.append(rr)
    return np.asarray(beats), np.asarray(rrs)


def _add_bump(x: np.ndarray, fs: float, center_s: float, half_s: float,
              amp: float) -> None:
    i0 = max(0, int(math.ceil((center_s - half_s) * fs)))
    i1 = min(x.size - 1, int(math.floor((center_s + half_s) * fs)))
    if i1 < i0:
        return
    t = np.arange(i0, i1 + 1) / fs
    x[i0:i1 + 1] += amp * 0.5 * (1.0 + np.cos(np.pi * (t - center_s) / half_s))


def _band_noise(n: int, fs: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance noise low-passed to the ECG band."""
    white = rng.standard_normal(n)
    if n < 32:
        return white
    sos = butter(4, min(40.0, 0.45 * fs), btype="low", fs=fs, output="sos")
    shaped = sosfiltfilt(sos, white)
    sd = shaped.std()
    return shaped / sd if sd > 0 else shaped


def _default_meta(profile: SynthProfile, rng: np.random.Generator) -> PatientMeta:
    from .cohort import META_COLUMNS, _META_ATTRS

    flags: dict[str, int | None] = {}
    for col, attr in zip(META_COLUMNS[1:], _META_ATTRS[1:]):
        if profile.meta_flags is not None and col in profile.meta_flags:
            flags[attr] = profile.meta_flags[col]
        elif col == "Gender":
            flags[attr] = int(rng.random() < 0.5)
        elif rng.random() < 0.08:
            flags[attr] = None
        else:
            flags[attr] = int(rng.random() < 0.2)
    return PatientMeta(patient_id=profile.patient_id, age=profile.age, **flags)


def synth_record(profile: SynthProfile, seed: int) -> SynthRecord:
    """Render one synthetic segment. Deterministic given (profile, seed)."""
    rng = np.random.default_rng(seed)
    fs = profile.fs
    beats, rrs = _generate_rr(profile, rng)
    warp = np.sqrt(rrs / _REF_RR_S)
    qs = profile.qrs_width_scale

    n = int(round(profile.duration_s * fs))
    x = np.zeros(n)
    sgn = 1.0 if profile.polarity >= 0 else -1.0
    for t_k, w in zip(beats, warp):
        _add_bump(x, fs, t_k + _P_CENTER * w, _P_HALF * w, sgn * profile.p_amp_mv)
        _add_bump(x, fs, t_k + _Q_CENTER * w * qs, _Q_HALF * w * qs,
                  sgn * profile.q_amp_mv)
        _add_bump(x, fs, t_k, _R_HALF * w * qs, sgn * profile.r_amp_mv)
        _add_bump(x, fs, t_k + _S_CENTER * w * qs, _S_HALF * w * qs,
                  sgn * profile.s_amp_mv)
        _add_bump(x, fs, t_k + _T_CENTER * w, _T_HALF * w, sgn * profile.t_amp_mv)

    t_axis = np.arange(n) / fs
    if profile.noise_mv > 0:
        x += profile.noise_mv * _band_noise(n, fs, rng)
        wander_amp = min(0.1, 2.0 * profile.noise_mv)
        x += wander_amp * np.sin(2 * np.pi * 0.21 * t_axis + rng.uniform(0, 2 * np.pi))
    for burst in profile.noise_bursts:
        sel = (t_axis >= burst.onset_s) & (t_axis < burst.onset_s + burst.duration_s)
        if sel.any():
            x[sel] += burst.sigma_mv * _band_noise(int(sel.sum()), fs, rng)

    fid = {
        "p_on": beats + (_P_CENTER - _P_HALF) * warp,
        "p_peak": beats + _P_CENTER * warp,
        "p_off": beats + (_P_CENTER + _P_HALF) * warp,
        "qrs_on": beats + (_Q_CENTER - _Q_HALF) * warp * qs,
        "r_peak": beats.copy(),
        "qrs_off": beats + (_S_CENTER + _S_HALF) * warp * qs,
        "t_on": beats + (_T_CENTER - _T_HALF) * warp,
        "t_peak": beats + _T_CENTER * warp,
        "t_off": beats + (_T_CENTER + _T_HALF) * warp,
    }
    if profile.p_amp_mv == 0.0:
        for key in ("p_on", "p_peak", "p_off"):
            fid[key] = np.full_like(beats, np.nan)
    if profile.t_amp_mv == 0.0:
        for key in ("t_on", "t_peak", "t_off"):
            fid[key] = np.full_like(beats, np.nan)

    record = EcgRecord(profile.patient_id, profile.segment_id, fs,
                       profile.start_offset_s, x)
    events = []
    for ep in profile.episodes:
        if ep.annotate:
            t0 = profile.start_offset_s + ep.onset_s
            events.append(SeizureEvent(profile.patient_id, t0,
                                       t0 + ep.duration_s, ep.manifestation))
    for t0, t1, man in profile.extra_events:
        events.append(SeizureEvent(profile.patient_id, t0, t1, Manifestation(man)))
    meta = _default_meta(profile, rng)
    ledger = SynthLedger(
        beat_t_s=beats, rr_s=rrs, warp=warp, fiducials_s=fid,
        episodes=[(ep.onset_s, ep.onset_s + ep.duration_s)
                  for ep in profile.episodes],
        bursts=[(b.onset_s, b.onset_s + b.duration_s)
                for b in profile.noise_bursts],
    )
    return SynthRecord(record=record, events=events, meta=meta, ledger=ledger)


# ------------------------------------------------------------- cohort level

@dataclass
class ClassProfile:
    """Parameter distributions for one label class of a synthetic cohort."""

    age_log_mean: float = math.log(5.0)
    age_log_sd: float = 0.6
    hr_mean_bpm: float = 100.0
    hr_sd_bpm: float = 10.0
    hrv_rel_mean: float = 0.04
    hrv_rel_sd: float = 0.01
    noise_mv_mean: float = 0.02
    noise_mv_sd: float = 0.005
    qrs_width_scale_mean: float = 1.0
    qrs_width_scale_sd: float = 0.05
    flag_p: dict[str, float] = field(default_factory=dict)
    flag_missing_p: float = 0.08
    #: Annotation-only labeling event (t_start_s, duration_s), e.g. outside
    #: the recorded span; None for no event.
    label_event: tuple[float, float] | None = None
    #: In-record tachycardia episode applied to every patient of the class.
    episode_onset_s: float | None = None
    episode_duration_s: float = 30.0
    episode_hr_rise: float = 0.30


@dataclass
class CohortProfile:
    n_patients: int = 20
    n_seizure: int = 6
    fs: float = 250.0
    duration_s: float = 1200.0
    seizure: ClassProfile = field(default_factory=ClassProfile)
    non_seizure: ClassProfile = field(default_factory=ClassProfile)
    #: Probability that a recorded hour is swamped by noise (fails quality).
    noisy_hour_p: float = 0.0
    noisy_hour_sigma_mv: float = 4.0
    id_prefix: str = "p"


@dataclass
class SynthCohort:
    cohort: Cohort
    ledgers: dict[str, SynthLedger]
    labels: dict[str, Label]
    #: Planned per-hour cleanliness per patient (generator bookkeeping).
    hour_plan: dict[str, list[bool]]


def _draw_patient_profile(pid: str, cls: ClassProfile, base: CohortProfile,
                          rng: np.random.Generator) -> SynthProfile:
    from .cohort import META_COLUMNS

    age = float(np.clip(rng.lognormal(cls.age_log_mean, cls.age_log_sd), 0.1, 18.0))
    flags: dict[str, int | None] = {}
    for col in META_COLUMNS[1:]:
        p = 0.5 if col == "Gender" else cls.flag_p.get(col, 0.15)
        if col != "Gender" and rng.random() < cls.flag_missing_p:
            flags[col] = None
        else:
            flags[col] = int(rng.random() < p)
    episodes = []
    if cls.episode_onset_s is not None:
        episodes.append(TachyEpisode(cls.episode_onset_s, cls.episode_duration_s,
                                     cls.episode_hr_rise))
    extra = []
    if cls.label_event is not None:
        t0, dur = cls.label_event
        extra.append((t0, t0 + dur, Manifestation.CLINICAL.value))
    return SynthProfile(
        patient_id=pid,
        segment_id="s0",
        fs=base.fs,
        duration_s=base.duration_s,
        mean_hr_bpm=float(np.clip(rng.normal(cls.hr_mean_bpm, cls.hr_sd_bpm), 60, 170)),
        hrv_rel=float(max(0.005, rng.normal(cls.hrv_rel_mean, cls.hrv_rel_sd))),
        noise_mv=float(max(0.0, rng.normal(cls.noise_mv_mean, cls.noise_mv_sd))),
        qrs_width_scale=float(np.clip(
            rng.normal(cls.qrs_width_scale_mean, cls.qrs_width_scale_sd), 0.6, 2.0)),
        age=age,
        episodes=episodes,
        extra_events=extra,
        meta_flags=flags,
    )


def synth_cohort(profile: CohortProfile, seed: int, render: bool = True) -> SynthCohort:
    """Generate a whole cohort; per-patient seeds derive from the master seed.

    With ``render=False`` only metadata, annotations, labels and the per-hour
    quality plan are produced (enough for dataset-shape work without paying
    for signal synthesis).
    """
    if not 0 <= profile.n_seizure <= profile.n_patients:
        raise ProfileParameterError("n_seizure must be within n_patients")
    width = max(3, len(str(profile.n_patients - 1)))
    pids = [f"{profile.id_prefix}{i:0{width}d}" for i in range(profile.n_patients)]
    assign_rng = np.random.default_rng(derive_seed(seed, "class-assignment"))
    seizure_ids = set(np.array(pids)[assign_rng.permutation(profile.n_patients)
                                     [:profile.n_seizure]])

    n_hours = max(1, int(math.ceil(profile.duration_s / 3600.0)))
    records, events, meta = [], [], {}
    ledgers: dict[str, SynthLedger] = {}
    labels: dict[str, Label] = {}
    hour_plan: dict[str, list[bool]] = {}

    for pid in pids:
        is_seizure = pid in seizure_ids
        cls = profile.seizure if is_seizure else profile.non_seizure
        rng_p = np.random.default_rng(derive_seed(seed, "patient", pid))
        sp = _draw_patient_profile(pid, cls, profile, rng_p)
        plan = [bool(rng_p.random() >= profile.noisy_hour_p) for _ in range(n_hours)]
        hour_plan[pid] = plan
        for h, clean in enumerate(plan):
            if not clean:
                span = min(3600.0, profile.duration_s - h * 3600.0)
                sp.noise_bursts.append(NoiseBurst(h * 3600.0, span,
                                                  profile.noisy_hour_sigma_mv))
        labels[pid] = Label.SEIZURE if is_seizure else Label.NON_SEIZURE
        if render:
            sr = synth_record(sp, derive_seed(seed, "record", pid))
            records.append(sr.record)
            events.extend(sr.events)
            meta[pid] = sr.meta
            ledgers[pid] = sr.ledger
        else:
            fake_rng = np.random.default_rng(derive_seed(seed, "meta", pid))
            meta[pid] = _default_meta(sp, fake_rng)
            for t0, t1, man in sp.extra_events:
                events.append(SeizureEvent(pid, t0, t1, Manifestation(man)))
            for ep in sp.episodes:
                if ep.annotate:
                    events.append(SeizureEvent(pid, ep.onset_s,
                                               ep.onset_s + ep.duration_s,
                                               ep.manifestation))

    cohort = Cohort(records=records, events=events, meta=meta)
    logger.info("synthesized cohort: %d patients (%d seizure), %d rendered segments",
                profile.n_patients, profile.n_seizure, len(records))
    return SynthCohort(cohort=cohort, ledgers=ledgers, labels=labels,
                       hour_plan=hour_plan)
