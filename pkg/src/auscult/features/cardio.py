"""Beat detection on envelope signals, HRV and breathing-pattern features.

The beat source is the cardiac envelope extracted from stethoscope audio, not
an ECG, so every HRV value here is an envelope-derived surrogate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import interpolate, stats
from scipy.signal import find_peaks

from .. import dsp
from ..dsp import Signal
from ..errors import TooFewBeats
from .basic import finite_or_none

CARDIAC_RATE_HZ = (0.7, 3.0)
BREATH_RATE_HZ = (0.1, 1.5)
MIN_BEATS = 4
HRV_FREQ_MIN_SPAN_S = 30.0
HRV_INTERP_HZ = 4.0
LF_BAND = (0.04, 0.15)
HF_BAND = (0.15, 0.4)


@dataclass(frozen=True, eq=False)
class BeatSeries:
    peak_times_s: np.ndarray
    min_rate_hz: float = CARDIAC_RATE_HZ[0]
    max_rate_hz: float = CARDIAC_RATE_HZ[1]

    def __post_init__(self):
        t = np.asarray(self.peak_times_s, dtype=float)
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("peak times must be strictly ascending")
        object.__setattr__(self, "peak_times_s", t)

    @property
    def ibi_ms(self) -> np.ndarray:
        return np.diff(self.peak_times_s) * 1000.0

    @classmethod
    def from_ibi(cls, ibi_ms, start_s: float = 0.0, **kw) -> "BeatSeries":
        t = start_s + np.concatenate(([0.0], np.cumsum(np.asarray(ibi_ms, dtype=float)) / 1000.0))
        return cls(t, **kw)

    def rate_in_range(self) -> bool:
        """Mean beat rate inside [min_rate_hz, max_rate_hz]."""
        ibi = self.ibi_ms
        if ibi.size == 0:
            return False
        rate = 1000.0 / ibi.mean()
        return self.min_rate_hz <= rate <= self.max_rate_hz


def detect_beats(env_window: Signal, min_rate_hz: float = CARDIAC_RATE_HZ[0],
                 max_rate_hz: float = CARDIAC_RATE_HZ[1], min_beats: int = MIN_BEATS) -> BeatSeries:
    """Peaks above median + 0.5 IQR, at least 1/max_rate_hz apart."""
    x = env_window.samples
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    threshold = med + 0.5 * (q3 - q1)
    distance = max(1, int(math.ceil(env_window.rate / max_rate_hz)))
    peaks, _ = find_peaks(x, height=threshold, distance=distance)
    peaks = peaks[x[peaks] > threshold]
    if peaks.size < min_beats:
        raise TooFewBeats(f"found {peaks.size} peaks, need {min_beats}")
    return BeatSeries(peaks / env_window.rate, min_rate_hz, max_rate_hz)


HRV_TIME_NAMES = ("n_beats", "hr_mean", "hr_std", "hr_min", "hr_max", "ibi_mean", "ibi_median",
                  "sdnn", "ibi_min", "ibi_max", "ibi_range", "rmssd", "sdsd", "nn50", "pnn50",
                  "nn20", "pnn20", "cvnn", "cvsd", "mad_nn", "mcv_nn", "iqr_nn", "prc20_nn",
                  "prc80_nn")
HRV_FREQ_NAMES = ("lf", "hf", "lf_hf", "lfn", "hfn", "lf_hf_power", "ln_hf")
HRV_NONLINEAR_NAMES = ("sd1", "sd2", "sd1_sd2", "ellipse_area", "csi", "cvi", "csi_modified")
HRV_NAMES = HRV_TIME_NAMES + HRV_FREQ_NAMES + HRV_NONLINEAR_NAMES


def _ratio(a, b):
    return a / b if (a is not None and b not in (None, 0)) else None


def hrv_time_domain(ibi: np.ndarray) -> dict:
    hr = 60000.0 / ibi
    diff = np.diff(ibi)
    mean = ibi.mean()
    sdnn = float(np.std(ibi, ddof=1)) if ibi.size > 1 else None
    rmssd = float(np.sqrt(np.mean(diff ** 2))) if diff.size else None
    med = float(np.median(ibi))
    mad = float(1.4826 * np.median(np.abs(ibi - med)))
    p20, q1, q3, p80 = np.percentile(ibi, [20, 25, 75, 80])
    nn50 = int(np.count_nonzero(np.abs(diff) > 50))
    nn20 = int(np.count_nonzero(np.abs(diff) > 20))
    return {
        "n_beats": float(ibi.size + 1),
        "hr_mean": float(hr.mean()),
        "hr_std": float(np.std(hr, ddof=1)) if hr.size > 1 else None,
        "hr_min": float(hr.min()),
        "hr_max": float(hr.max()),
        "ibi_mean": float(mean),
        "ibi_median": med,
        "sdnn": sdnn,
        "ibi_min": float(ibi.min()),
        "ibi_max": float(ibi.max()),
        "ibi_range": float(np.ptp(ibi)),
        "rmssd": rmssd,
        "sdsd": float(np.std(diff, ddof=1)) if diff.size > 1 else None,
        "nn50": float(nn50),
        "pnn50": 100.0 * nn50 / diff.size if diff.size else None,
        "nn20": float(nn20),
        "pnn20": 100.0 * nn20 / diff.size if diff.size else None,
        "cvnn": _ratio(sdnn, mean),
        "cvsd": _ratio(rmssd, mean),
        "mad_nn": mad,
        "mcv_nn": _ratio(mad, med),
        "iqr_nn": float(q3 - q1),
        "prc20_nn": float(p20),
        "prc80_nn": float(p80),
    }


def hrv_frequency_domain(b: BeatSeries) -> dict:
    """LF/HF powers (ms^2) of the IBI series interpolated at 4 Hz."""
    t = b.peak_times_s[1:]
    ibi = b.ibi_ms
    grid = np.arange(t[0], t[-1], 1.0 / HRV_INTERP_HZ)
    kind = "cubic" if ibi.size >= 4 else "linear"
    series = interpolate.interp1d(t, ibi, kind=kind)(grid)
    seg = min(grid.size, 256)
    p = dsp.welch_psd(Signal(series, HRV_INTERP_HZ), segment_len=seg)
    lf = dsp.band_power(p, *LF_BAND)
    hf = dsp.band_power(p, *HF_BAND)
    tot = lf + hf
    return {
        "lf": lf,
        "hf": hf,
        "lf_hf": _ratio(lf, hf),
        "lfn": 100.0 * lf / tot if tot > 0 else None,
        "hfn": 100.0 * hf / tot if tot > 0 else None,
        "lf_hf_power": tot,
        "ln_hf": math.log(hf) if hf > 0 else None,
    }


def poincare(rmssd: float, sdnn: float) -> dict:
    sd1 = rmssd / math.sqrt(2.0)
    sd2_sq = 2.0 * sdnn ** 2 - sd1 ** 2
    sd2 = math.sqrt(sd2_sq) if sd2_sq >= 0 else None
    prod = sd1 * sd2 if sd2 is not None else None
    return {
        "sd1": sd1,
        "sd2": sd2,
        "sd1_sd2": _ratio(sd1, sd2),
        "ellipse_area": math.pi * prod if prod is not None else None,
        "csi": _ratio(sd2, sd1),
        "cvi": math.log10(16.0 * prod) if prod else None,
        "csi_modified": _ratio(sd2 ** 2 if sd2 is not None else None, sd1),
    }


def hrv_features(b: BeatSeries) -> dict:
    """Time, frequency and Poincare HRV values; entries lacking data are None."""
    out = dict.fromkeys(HRV_NAMES)
    if b.peak_times_s.size < MIN_BEATS:
        return out
    ibi = b.ibi_ms
    out.update(hrv_time_domain(ibi))
    if b.peak_times_s[-1] - b.peak_times_s[0] >= HRV_FREQ_MIN_SPAN_S:
        out.update(hrv_frequency_domain(b))
    if out["rmssd"] is not None and out["sdnn"] is not None:
        out.update(poincare(out["rmssd"], out["sdnn"]))
    return {k: finite_or_none(v) for k, v in out.items()}


def window_hrv(env_window: Signal) -> dict:
    """HRV of a cardiac-envelope window, all absent when beats are unusable."""
    try:
        beats = detect_beats(env_window)
    except TooFewBeats:
        return dict.fromkeys(HRV_NAMES)
    if not beats.rate_in_range():
        return dict.fromkeys(HRV_NAMES)
    return hrv_features(beats)


RESPIRATION_NAMES = ("breath_rate_bpm", "breath_interval_mean", "breath_interval_std",
                     "envelope_skewness", "modulation_depth", "breath_band_fraction")


def respiration_features(resp_env_window: Signal) -> dict:
    x = resp_env_window.samples
    rate = resp_env_window.rate
    out = dict.fromkeys(RESPIRATION_NAMES)
    lo, hi = BREATH_RATE_HZ
    # one segment over the window, zero padded to a 0.01 Hz grid
    p = dsp.welch_psd(resp_env_window, segment_len=x.size, nfft=max(x.size, int(rate * 100)))
    band = (p.freqs >= lo) & (p.freqs <= hi)
    tot = dsp.total_power(p)
    # a constant envelope leaves only round-off after mean removal
    flat = np.ptp(x) <= 1e-12 * max(1.0, float(np.max(np.abs(x))))
    if not flat and tot > 0 and band.any() and p.density[band].max() > 0:
        out["breath_rate_bpm"] = 60.0 * float(p.freqs[band][np.argmax(p.density[band])])
        out["breath_band_fraction"] = dsp.band_power(p, lo, hi) / tot
    try:
        breaths = detect_beats(resp_env_window, lo, hi, min_beats=3)
        iv = np.diff(breaths.peak_times_s)
        out["breath_interval_mean"] = float(iv.mean())
        out["breath_interval_std"] = float(iv.std())
    except TooFewBeats:
        pass
    if not flat:
        out["envelope_skewness"] = float(stats.skew(x))
    mx, mn = x.max(), x.min()
    out["modulation_depth"] = (mx - mn) / (mx + mn) if mx + mn > 0 else (0.0 if mx == mn else None)
    return {k: finite_or_none(v) for k, v in out.items()}
