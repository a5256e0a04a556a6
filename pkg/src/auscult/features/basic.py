"""Windowing plus statistical, spectral and MFCC window features."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .. import dsp
from ..dsp import Signal
from ..emd import PHYSIO_BANDS
from ..errors import FrameTooLong

N_SUBWINDOWS = 5


@dataclass(frozen=True)
class WindowPlan:
    length_s: float = 10.0
    step_s: float = 1.0

    def __post_init__(self):
        if not 0 < self.step_s <= self.length_s:
            raise ValueError("need 0 < step_s <= length_s")

    @property
    def overlap(self) -> float:
        return 1.0 - self.step_s / self.length_s

    def count(self, duration_s: float) -> int:
        if duration_s < self.length_s:
            return 0
        # tolerate round-off in durations computed from sample counts
        return int(np.floor((duration_s - self.length_s) / self.step_s + 1e-9)) + 1


def segment_windows(s: Signal, plan: WindowPlan = WindowPlan()) -> list[Signal]:
    n_win = plan.count(s.duration)
    if n_win == 0:
        warnings.warn(f"signal of {s.duration:.2f} s is shorter than one {plan.length_s} s window")
        return []
    width = int(round(plan.length_s * s.rate))
    return [Signal(s.samples[start : start + width], s.rate)
            for start in (int(round(k * plan.step_s * s.rate)) for k in range(n_win))]


def subwindows(x: np.ndarray, n: int = N_SUBWINDOWS) -> list[np.ndarray]:
    return [c for c in np.array_split(x, n) if c.size]


def finite_or_none(v):
    if v is None:
        return None
    v = float(v)
    return v if np.isfinite(v) else None


def mean_of(values):
    """Mean over the present values; None when none are present."""
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


STAT_NAMES = ("mean", "min", "max", "std", "range", "snr", "median", "q1", "q3",
              "slope", "energy", "autocorr1")
STAT_SUB_NAMES = tuple(f"sw_mean_{n}" for n in STAT_NAMES) + tuple(f"sw_std_{n}" for n in STAT_NAMES)


def _stats(x: np.ndarray, rate: float) -> dict:
    n = x.size
    mu = float(np.mean(x))
    sd = float(np.std(x))
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    if n > 1:
        t = np.arange(n) / rate
        tc = t - t.mean()
        slope = float(np.dot(tc, x - mu) / np.dot(tc, tc))
    else:
        slope = None
    xc = x - mu
    denom = float(np.dot(xc, xc))
    ac = float(np.dot(xc[:-1], xc[1:]) / denom) if n > 1 and denom > 0 else None
    return {
        "mean": mu,
        "min": float(np.min(x)),
        "max": float(np.max(x)),
        "std": sd,
        "range": float(np.ptp(x)),
        "snr": mu / sd if sd > 0 else None,
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "slope": slope,
        "energy": float(np.dot(x, x)),
        "autocorr1": ac,
    }


def stat_features(w: Signal) -> dict:
    """Whole-window statistics plus their mean and spread over 5 sub-windows."""
    x = w.samples
    if x.size == 0:
        return {k: None for k in STAT_NAMES + STAT_SUB_NAMES}
    out = {k: finite_or_none(v) for k, v in _stats(x, w.rate).items()}
    subs = [_stats(c, w.rate) for c in subwindows(x)]
    for name in STAT_NAMES:
        vals = [s[name] for s in subs if s[name] is not None]
        out[f"sw_mean_{name}"] = finite_or_none(np.mean(vals)) if vals else None
        out[f"sw_std_{name}"] = finite_or_none(np.std(vals)) if vals else None
    return out


def band_label(band) -> str:
    lo, hi = band
    return f"bp_{lo:g}_{hi:g}hz"


def spectral_bands(rate: float, bands=PHYSIO_BANDS) -> tuple:
    """Bands that start below Nyquist at ``rate``."""
    return tuple(b for b in bands if b[0] < rate / 2)


def spectral_names(rate: float) -> tuple:
    return (("total_power",) + tuple(band_label(b) for b in spectral_bands(rate))
            + ("centroid", "dominant_freq"))


SPECTRAL_SUB_NAMES = ("sw_mean_total_power", "sw_mean_centroid", "sw_mean_dominant_freq")


def _spectrum_summary(w: Signal, bands) -> dict:
    p = dsp.welch_psd(w)
    tot = dsp.total_power(p)
    out = {"total_power": tot}
    for b in bands:
        out[band_label(b)] = dsp.band_power(p, *b)
    if tot > 0:
        out["centroid"] = float(np.trapezoid(p.freqs * p.density, p.freqs) / tot)
        out["dominant_freq"] = float(p.freqs[np.argmax(p.density)])
    else:
        out["centroid"] = out["dominant_freq"] = None
    return out


def spectral_features(w: Signal) -> dict:
    bands = spectral_bands(w.rate)
    out = {k: finite_or_none(v) for k, v in _spectrum_summary(w, bands).items()}
    subs = [_spectrum_summary(Signal(c, w.rate), ()) for c in subwindows(w.samples) if c.size >= 8]
    for key in ("total_power", "centroid", "dominant_freq"):
        out[f"sw_mean_{key}"] = finite_or_none(mean_of(s[key] for s in subs))
    return out


N_MFCC = 13
N_MELS = 26
MFCC_NAMES = tuple(f"mean_{i}" for i in range(N_MFCC)) + tuple(f"std_{i}" for i in range(N_MFCC))


def mfcc_features(w: Signal) -> dict:
    """Mean and standard deviation across frames of 13 MFCCs (26 values)."""
    try:
        c = dsp.mfcc(w, n_mels=N_MELS, n_coeffs=N_MFCC)
    except FrameTooLong:
        return {k: None for k in MFCC_NAMES}
    out = {f"mean_{i}": float(v) for i, v in enumerate(c.mean(axis=0))}
    out.update({f"std_{i}": float(v) for i, v in enumerate(c.std(axis=0))})
    return out
