"""Shared fixtures. Expensive synthetic records are session-scoped."""

from __future__ import annotations

import numpy as np
import pytest

from ecgtriage.preprocess import NnSeries
from ecgtriage.synth import SynthProfile, SynthRecord, synth_record


@pytest.fixture(scope="session")
def clean_600s() -> SynthRecord:
    """600 s clean record at HR 100, the workhorse fixture."""
    return synth_record(SynthProfile(duration_s=600.0, noise_mv=0.01), seed=11)


@pytest.fixture(scope="session")
def clean_hr60() -> SynthRecord:
    return synth_record(
        SynthProfile(duration_s=300.0, mean_hr_bpm=60.0, noise_mv=0.01), seed=3)


def make_nn(nn_ms, t_s=None) -> NnSeries:
    nn_ms = np.asarray(nn_ms, dtype=float)
    if t_s is None:
        t_s = np.cumsum(nn_ms) / 1000.0
    return NnSeries(nn_ms=nn_ms, t_s=np.asarray(t_s, dtype=float),
                    keep_mask=np.ones(nn_ms.size, dtype=bool))
