import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from auscult.dsp import Signal
from auscult.emd import BIOSIGNAL_NAMES, BiosignalSet
from auscult.errors import TooFewBeats
from auscult.features.basic import (
    MFCC_NAMES, WindowPlan, mfcc_features, segment_windows, spectral_features, stat_features,
)
from auscult.features.cardio import (
    BeatSeries, HRV_NAMES, detect_beats, hrv_features, respiration_features, window_hrv,
)
from auscult.features.extract import (
    REGISTRY_V1_SIZE, build_registry, extract_feature_matrix, feature_csv_text, read_feature_csv,
)
from auscult.features.nonlinear import (
    dfa_alpha, entropy_features, fractal_features, higuchi_fd, katz_fd, permutation_entropy,
    petrosian_fd, sample_entropy, zero_crossings,
)
from helpers import bump_train, katz_loop, petrosian_loop, sampen_loop


def test_window_counts():
    for dur, expected in ((30.0, 21), (10.0, 1)):
        assert len(segment_windows(Signal(np.zeros(int(dur * 100)), 100), WindowPlan())) == expected
        assert WindowPlan().count(dur) == math.floor((dur - 10) / 1) + 1
    with pytest.warns(UserWarning):
        assert segment_windows(Signal(np.zeros(900), 100)) == []
    assert WindowPlan().overlap == pytest.approx(0.9)


def test_window_starts():
    x = np.arange(3000.0)
    w = segment_windows(Signal(x, 100))
    assert [v.samples[0] for v in w[:3]] == [0.0, 100.0, 200.0]


def test_stat_constant_and_hand():
    f = stat_features(Signal(np.full(100, 2.0), 10))
    assert (f["mean"], f["std"], f["range"], f["snr"], f["slope"]) == (2.0, 0.0, 0.0, None, 0.0)
    f = stat_features(Signal(np.array([1.0, 2, 3, 4, 5, 6, 7, 8, 9, 10]), 1))
    assert f["mean"] == 5.5 and f["range"] == 9 and f["energy"] == 385.0
    assert f["slope"] == pytest.approx(1.0)
    f = stat_features(Signal(np.array([1.0, 2, 3, 4]), 1))
    assert (f["mean"], f["range"], f["energy"]) == (2.5, 3.0, 30.0)


def test_stat_sine_energy():
    n = 1000
    x = np.sin(2 * np.pi * 5 * np.arange(n) / n)
    f = stat_features(Signal(x, 100))
    assert abs(f["mean"]) < 1e-12
    assert f["energy"] == pytest.approx(n / 2)


def test_spectral_examples(rng):
    t = np.arange(1000) / 100
    f = spectral_features(Signal(np.sin(2 * np.pi * 3 * t), 100))
    assert f["dominant_freq"] == pytest.approx(3.0, abs=0.25)
    f = spectral_features(Signal(rng.standard_normal(40000), 4000))
    assert abs(f["centroid"] - 1000) <= 100
    f = spectral_features(Signal(np.zeros(1000), 100))
    assert f["total_power"] == 0 and f["centroid"] is None
    assert all(v == 0 for k, v in f.items() if k.startswith("bp_"))


def test_fractal_oracles(rng):
    line = np.arange(500.0)
    assert katz_fd(line) == 1.0
    noise = rng.standard_normal(4096)
    assert 0.4 <= dfa_alpha(noise) <= 0.6
    assert 1.35 <= dfa_alpha(np.cumsum(noise)) <= 1.65
    assert 1.85 <= higuchi_fd(noise) <= 2.15
    x = noise[:300]
    assert katz_fd(x) == pytest.approx(katz_loop(x), rel=1e-12)
    assert petrosian_fd(x) == pytest.approx(petrosian_loop(x), rel=1e-12)


def test_entropy_examples(rng):
    f = entropy_features(Signal(np.full(500, 1.5), 100))
    assert f["sample"] is None and f["zero_crossings"] == 0 and f["hjorth_activity"] == 0
    assert permutation_entropy(np.arange(200.0)) == 0.0
    k, n = 7, 700
    sine = np.sin(2 * np.pi * k * np.arange(n) / n + 0.1)
    assert zero_crossings(sine) == 2 * k
    noise = rng.standard_normal(n)
    assert sample_entropy(sine) < sample_entropy(noise)
    assert sample_entropy(noise[:150]) == pytest.approx(sampen_loop(noise[:150]), rel=1e-12)


def test_mfcc_features(rng):
    x = rng.standard_normal(40000)
    a = mfcc_features(Signal(x, 4000))
    b = mfcc_features(Signal(2 * x, 4000))
    assert len(a) == 26 and tuple(a) == MFCC_NAMES
    changed = [k for k in a if abs(a[k] - b[k]) > 1e-6]
    assert changed == ["mean_0"]


def test_detect_beats_train():
    b = detect_beats(bump_train(0.8))
    assert 12 <= b.peak_times_s.size <= 13
    assert np.all(np.abs(b.ibi_ms - 800) <= 20)
    with pytest.raises(TooFewBeats):
        detect_beats(Signal(np.ones(1000), 100))
    slow = bump_train(3.0, duration_s=20.0)
    with pytest.raises(TooFewBeats):
        detect_beats(slow, 0.7, 3.0, min_beats=8)
    beats = detect_beats(slow, 0.7, 3.0)
    assert beats.peak_times_s.size >= 4 and not beats.rate_in_range()
    assert all(v is None for v in window_hrv(slow).values())


def test_hrv_closed_forms():
    f = hrv_features(BeatSeries.from_ibi([800.0] * 10))
    assert f["hr_mean"] == pytest.approx(75.0, abs=1e-9)
    assert f["sdnn"] == pytest.approx(0.0, abs=1e-9) and f["rmssd"] == pytest.approx(0.0, abs=1e-9)
    assert f["pnn50"] == 0.0
    f = hrv_features(BeatSeries.from_ibi([800.0, 860.0] * 6))
    assert f["rmssd"] == pytest.approx(60.0, abs=1e-9)
    assert f["pnn50"] == pytest.approx(100.0, abs=1e-9)
    ibi = np.array([812.0, 790.0, 845.0, 801.0, 779.0])
    f = hrv_features(BeatSeries.from_ibi(ibi))
    d = np.diff(ibi)
    assert f["ibi_mean"] == pytest.approx(805.4, abs=1e-9)
    assert f["sdnn"] == pytest.approx(np.sqrt(np.sum((ibi - 805.4) ** 2) / 4), abs=1e-9)
    assert f["rmssd"] == pytest.approx(np.sqrt(np.sum(d ** 2) / 4), abs=1e-9)
    assert f["nn50"] == 1.0 and f["pnn50"] == pytest.approx(25.0, abs=1e-9)
    assert f["ibi_min"] == pytest.approx(779.0, abs=1e-9) and f["ibi_max"] == pytest.approx(845.0, abs=1e-9)


@given(st.lists(st.floats(400, 1500), min_size=5, max_size=60))
@settings(max_examples=50, deadline=None)
def test_sd1_matches_poincare_scatter(ibi):
    f = hrv_features(BeatSeries.from_ibi(ibi))
    x = np.asarray(ibi)
    # distance of each (x_n, x_{n+1}) point from the identity line, RMS over points
    perp = (x[1:] - x[:-1]) / np.sqrt(2)
    assert f["sd1"] == pytest.approx(np.sqrt(np.mean(perp ** 2)), abs=1e-9)


def test_hrv_frequency_needs_30s():
    short = hrv_features(BeatSeries.from_ibi([800.0] * 20))
    assert short["lf"] is None
    n = 120
    t = np.cumsum(np.full(n, 0.8))
    ibi = 800 + 40 * np.sin(2 * np.pi * 0.25 * t)
    f = hrv_features(BeatSeries.from_ibi(ibi))
    assert f["hf"] > f["lf"] > 0


def test_respiration_features():
    rate = 100
    t = np.arange(10 * rate) / rate
    f = respiration_features(Signal(1 + 0.5 * np.sin(2 * np.pi * 0.25 * t), rate))
    assert abs(f["breath_rate_bpm"] - 15) <= 2
    # three whole periods: symmetric sample distribution
    f = respiration_features(Signal(1 + 0.5 * np.sin(2 * np.pi * 0.3 * t), rate))
    assert abs(f["envelope_skewness"]) <= 0.1
    f = respiration_features(Signal(np.full(1000, 0.7), rate))
    assert f["breath_rate_bpm"] is None and f["modulation_depth"] == 0.0


def test_registry():
    reg = build_registry()
    assert len(reg) == REGISTRY_V1_SIZE
    assert len(set(reg.names)) == len(reg)
    fams = {(e.source, e.family) for e in reg.entries}
    assert {s for s, f in fams if f == "mfcc"} == {"acoustic"}
    assert {s for s, f in fams if f == "hrv"} == {"cardiac_env"}
    assert {s for s, f in fams if f == "respiration"} == {"respiration_env"}
    for fam in ("stat", "spectral", "fractal", "entropy"):
        assert {s for s, f in fams if f == fam} == set(BIOSIGNAL_NAMES)
    assert sum(e.family == "hrv" for e in reg.entries) == len(HRV_NAMES)
    assert build_registry().fingerprint() == reg.fingerprint()
    with pytest.raises(ValueError):
        build_registry("v0")


def _toy_bios(duration_s, rate=4000, seed=0):
    r = np.random.default_rng(seed)
    t = np.arange(int(duration_s * rate)) / rate
    env = 1 + 0.5 * np.sin(2 * np.pi * 0.3 * t)
    sigs = {
        "respiration_env": env,
        "cardiac_env": 1 + 0.8 * (np.sin(2 * np.pi * 1.2 * t) > 0.9),
        "imf_heart": np.sin(2 * np.pi * 2 * t),
        "imf_mid1": np.sin(2 * np.pi * 7 * t),
        "imf_mid2": np.sin(2 * np.pi * 15 * t),
        "acoustic": env * r.standard_normal(t.size),
    }
    return BiosignalSet(**{k: Signal(v, rate) for k, v in sigs.items()})


@pytest.fixture(scope="module")
def toy_matrix():
    return extract_feature_matrix(_toy_bios(30.0))


def test_extract_counts(toy_matrix):
    assert len(toy_matrix) == 21
    assert all(v.values.size == REGISTRY_V1_SIZE for v in toy_matrix)
    assert [v.window_index for v in toy_matrix] == list(range(21))
    assert not any(np.isinf(v.values).any() for v in toy_matrix)


def test_extract_deterministic_and_trailing_invariant():
    a = extract_feature_matrix(_toy_bios(11.0))
    b = extract_feature_matrix(_toy_bios(11.0))
    assert all(np.array_equal(x.values, y.values, equal_nan=True) for x, y in zip(a, b))
    # appending under one step of samples leaves windows unchanged
    bios = _toy_bios(11.0)
    pad = {k: Signal(np.r_[s.samples, np.zeros(2000)], s.rate) for k, s in bios.signals().items()}
    c = extract_feature_matrix(BiosignalSet(**pad))
    assert len(c) == len(a)
    assert all(np.array_equal(x.values, y.values, equal_nan=True) for x, y in zip(a, c))


def test_amplitude_invariant_families(rng):
    x = rng.standard_normal(1000)
    a = {**fractal_features(Signal(x, 100)), **entropy_features(Signal(x, 100))}
    b = {**fractal_features(Signal(2 * x, 100)), **entropy_features(Signal(2 * x, 100))}
    for k in ("katz", "higuchi", "petrosian", "dfa", "permutation", "zero_crossings"):
        assert abs(a[k] - b[k]) <= 1e-9, k
    assert b["hjorth_activity"] == pytest.approx(4 * a["hjorth_activity"])


def test_csv_round_trip(toy_matrix):
    reg = build_registry()
    text = feature_csv_text(toy_matrix[:3], reg)
    header = text.splitlines()[0].split(",")
    assert header[:3] == ["patient_id", "recording", "window_index"] and header[3:] == reg.names
    names, back = read_feature_csv(io.StringIO(text))
    assert names == reg.names
    for x, y in zip(toy_matrix[:3], back):
        assert np.array_equal(x.values, y.values, equal_nan=True)
    # absent values are empty fields
    n_absent = int(np.isnan(toy_matrix[0].values).sum())
    assert n_absent > 0
    assert text.splitlines()[1].split(",")[3:].count("") == n_absent
