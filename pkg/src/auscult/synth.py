"""Seeded two-class synthetic auscultation corpus in the distribution's directory layout.

Class 0 ("Healthy") breathes slowly with smooth band-limited flow noise and soft
heart thumps. Class 1 ("COPD") breathes faster and adds crackle clicks during
inspiration plus a faint wheeze. Each subject gets its own rate and gain jitter.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .wav import encode_wav

SYNTH_RATE = 4000


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 24
    duration_s: float = 16.0
    rate: int = SYNTH_RATE
    recordings_per_subject: int = 1
    seed: int = 0
    first_patient_id: int = 101


CLASS_PARAMS = {
    # breathing Hz, heart Hz, crackles per breath, wheeze amplitude
    0: (0.25, 1.1, 0, 0.0),
    1: (0.50, 1.5, 6, 0.15),
}
CLASS_DIAGNOSIS = {0: "Healthy", 1: "COPD"}


def _band_noise(rng, n, rate, lo, hi):
    sos = butter(4, [lo, hi], btype="band", fs=rate, output="sos")
    x = sosfiltfilt(sos, rng.standard_normal(n))
    return x / (np.std(x) + 1e-12)


def synth_recording(label: int, rng: np.random.Generator, duration_s: float = 16.0,
                    rate: int = SYNTH_RATE) -> tuple[np.ndarray, list]:
    """Samples in [-1, 1] plus the breathing cycles as (begin_s, end_s, crackles, wheezes)."""
    breath_hz, heart_hz, n_crackles, wheeze_amp = CLASS_PARAMS[label]
    breath_hz *= rng.uniform(0.9, 1.1)
    heart_hz *= rng.uniform(0.92, 1.08)
    n = int(round(duration_s * rate))
    t = np.arange(n) / rate
    phase0 = rng.uniform(0, 2 * np.pi)
    breath = 0.5 * (1 + np.sin(2 * np.pi * breath_hz * t + phase0))
    x = breath ** 1.5 * _band_noise(rng, n, rate, 200, 700)

    # heart thumps: 60 Hz bursts under a Gaussian envelope
    beats = np.arange(rng.uniform(0, 1 / heart_hz), duration_s, 1 / heart_hz)
    thump = np.zeros(n)
    for b in beats:
        thump += np.exp(-0.5 * ((t - b) / 0.03) ** 2)
    x += 0.6 * thump * np.sin(2 * np.pi * 60 * t)

    cycles = []
    period = 1 / breath_hz
    start = (-phase0 / (2 * np.pi * breath_hz) - period / 4) % period
    for c0 in np.arange(start, duration_s - period, period):
        cycles.append((round(c0, 3), round(c0 + period, 3), n_crackles > 0, wheeze_amp > 0))
        # crackles: short decaying 800 Hz clicks in the inspiratory half
        for tc in c0 + rng.uniform(0, period / 2, size=n_crackles):
            i0 = int(tc * rate)
            k = np.arange(min(40, n - i0))
            x[i0 : i0 + k.size] += 2.0 * np.exp(-k / 8.0) * np.sin(2 * np.pi * 800 * k / rate)
    if wheeze_amp:
        x += wheeze_amp * 3.0 * breath * np.sin(2 * np.pi * rng.uniform(380, 420) * t)

    x += 0.05 * rng.standard_normal(n)
    x *= rng.uniform(0.7, 1.0) / np.max(np.abs(x))
    return x, cycles


def write_synthetic_dataset(out_dir, config: SynthConfig = SynthConfig()) -> Path:
    """Write WAVs, cycle annotations and the two metadata tables; returns the root."""
    root = Path(out_dir)
    audio = root / "audio"
    audio.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    diag_lines, demo_lines = [], []
    for i in range(config.n_subjects):
        pid = config.first_patient_id + i
        label = i % 2
        for r in range(config.recordings_per_subject):
            x, cycles = synth_recording(label, rng, config.duration_s, config.rate)
            stem = f"{pid}_{r + 1}b1_Al_sc_Synth"
            (audio / f"{stem}.wav").write_bytes(encode_wav(x, config.rate, "pcm16"))
            ann = "".join(f"{b}\t{e}\t{int(c)}\t{int(w)}\n" for b, e, c, w in cycles)
            (audio / f"{stem}.txt").write_text(ann)
        diag_lines.append(f"{pid}\t{CLASS_DIAGNOSIS[label]}")
        age = float(np.round(rng.uniform(20, 80), 1))
        sex = "F" if rng.random() < 0.5 else "M"
        bmi = float(np.round(rng.uniform(18, 32), 2))
        demo_lines.append(f"{pid} {age} {sex} {bmi} NA NA")
    (root / "synth_diagnosis.txt").write_text("\n".join(diag_lines) + "\n")
    (root / "synth_demographic_info.txt").write_text("\n".join(demo_lines) + "\n")
    return root
