"""Deterministic signal kernels: FIR design and filtering, resampling, Welch PSD,
band power, Hilbert amplitude envelope and MFCC.

All functions are pure. Edges are handled by zero padding.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal as sps

from .errors import (
    EvenTapCount,
    FrameTooLong,
    InvalidCutoff,
    InvalidSignal,
    RateMismatch,
    SegmentTooLong,
)

WELCH_SEGMENT_S = 4.0
WELCH_OVERLAP = 0.5
RESAMPLE_CUTOFF_FRACTION = 0.45  # times the lower of the two sample rates
RESAMPLE_TAPS_PER_PHASE = 101


@dataclass(frozen=True, eq=False)
class Signal:
    samples: np.ndarray
    rate: float

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1:
            raise InvalidSignal(f"samples must be 1-D, got shape {x.shape}")
        if not self.rate > 0:
            raise InvalidSignal(f"rate must be positive, got {self.rate}")
        if not np.all(np.isfinite(x)):
            raise InvalidSignal("samples must be finite")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.rate

    def with_samples(self, samples) -> "Signal":
        return Signal(samples, self.rate)


@dataclass(frozen=True, eq=False)
class FirFilter:
    taps: np.ndarray
    cutoff_hz: float
    design_rate: float

    @property
    def delay(self) -> int:
        return (self.taps.size - 1) // 2


@dataclass(frozen=True, eq=False)
class PowerSpectrum:
    freqs: np.ndarray
    density: np.ndarray

    @property
    def df(self) -> float:
        return float(self.freqs[1] - self.freqs[0]) if self.freqs.size > 1 else 0.0

    def to_text(self, delimiter: str = "\t") -> str:
        rows = [f"freq_hz{delimiter}density"]
        rows += [f"{f!r}{delimiter}{d!r}" for f, d in zip(self.freqs.tolist(), self.density.tolist())]
        return "\n".join(rows) + "\n"


def odd_taps(n: float, minimum: int = 11, maximum: int | None = None) -> int:
    """Round ``n`` up to an odd tap count, clamped to ``[minimum, maximum]``."""
    n = max(int(np.ceil(n)), minimum)
    if maximum is not None and n >= maximum:
        return maximum if maximum % 2 else maximum - 1
    return n if n % 2 else n + 1


def design_lowpass_fir(cutoff_hz: float, num_taps: int, rate: float) -> FirFilter:
    """Hamming-windowed sinc low-pass with unit DC gain.

    h[n] = sinc(2 fc/rate (n - M)) * hamming(n), M = (num_taps - 1) / 2, then
    normalised so that sum(h) == 1.
    """
    if not 0 < cutoff_hz < rate / 2:
        raise InvalidCutoff(f"cutoff {cutoff_hz} Hz outside (0, {rate / 2}) Hz")
    if num_taps % 2 == 0:
        raise EvenTapCount(f"num_taps must be odd, got {num_taps}")
    if num_taps < 11:
        raise EvenTapCount(f"num_taps must be >= 11, got {num_taps}")
    m = (num_taps - 1) // 2
    n = np.arange(num_taps) - m
    h = np.sinc(2.0 * cutoff_hz / rate * n) * np.hamming(num_taps)
    h /= h.sum()
    # exact symmetry, independent of rounding in the window evaluation
    h = 0.5 * (h + h[::-1])
    return FirFilter(h, float(cutoff_hz), float(rate))


def design_bandpass_fir(lo_hz: float, hi_hz: float, num_taps: int, rate: float) -> FirFilter:
    """Hamming band-pass built as the difference of two low-pass designs.

    If ``hi_hz`` reaches Nyquist the result is a high-pass.
    """
    nyq = rate / 2
    hi_taps = (
        np.r_[np.zeros((num_taps - 1) // 2), 1.0, np.zeros((num_taps - 1) // 2)]
        if hi_hz >= nyq
        else design_lowpass_fir(hi_hz, num_taps, rate).taps
    )
    if lo_hz <= 0:
        return FirFilter(hi_taps, float(hi_hz), float(rate))
    lo_taps = design_lowpass_fir(lo_hz, num_taps, rate).taps
    return FirFilter(hi_taps - lo_taps, float(hi_hz), float(rate))


def frequency_response(taps: np.ndarray, freqs: np.ndarray, rate: float) -> np.ndarray:
    """|H(f)| evaluated by direct DTFT of the taps."""
    n = np.arange(taps.size)
    w = 2 * np.pi * np.asarray(freqs, dtype=float)[:, None] / rate
    return np.abs(np.exp(-1j * w * n[None, :]) @ taps)


def _fir_apply(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Delay-compensated 'same'-length convolution with zero padding."""
    if x.size == 0:
        return x.copy()
    full = sps.oaconvolve(x, taps) if taps.size > 64 else np.convolve(x, taps)
    d = (taps.size - 1) // 2
    return full[d : d + x.size]


def filter_signal(s: Signal, f: FirFilter) -> Signal:
    if not np.isclose(f.design_rate, s.rate):
        raise RateMismatch(f"filter designed at {f.design_rate} Hz, signal at {s.rate} Hz")
    return Signal(_fir_apply(s.samples, f.taps), s.rate)


def _rational_ratio(target: float, source: float) -> Fraction:
    if float(target).is_integer() and float(source).is_integer():
        return Fraction(int(target), int(source))
    return Fraction(target / source).limit_denominator(10_000)


def resample(s: Signal, target_rate: float) -> Signal:
    """Rational-ratio polyphase resampling behind a Hamming FIR anti-alias stage.

    The cutoff sits at 0.45 x the lower of the two rates; the prototype filter
    has 101 taps per phase of the larger of the up/down factors.
    """
    if not target_rate > 0:
        raise InvalidSignal(f"target rate must be positive, got {target_rate}")
    ratio = _rational_ratio(target_rate, s.rate)
    up, down = ratio.numerator, ratio.denominator
    if up == down == 1:
        return Signal(s.samples.copy(), s.rate)
    out_rate = s.rate * up / down
    if s.samples.size == 0:
        return Signal(s.samples.copy(), out_rate)
    inter_rate = s.rate * up
    cutoff = RESAMPLE_CUTOFF_FRACTION * min(s.rate, out_rate)
    ntaps = RESAMPLE_TAPS_PER_PHASE * max(up, down)
    ntaps += 1 - ntaps % 2
    taps = design_lowpass_fir(cutoff, ntaps, inter_rate).taps
    y = sps.resample_poly(s.samples, up, down, window=taps)
    return Signal(y, float(target_rate) if np.isclose(out_rate, target_rate) else out_rate)


def welch_psd(s: Signal, segment_len: int | None = None, overlap: float = WELCH_OVERLAP,
              nfft: int | None = None) -> PowerSpectrum:
    """One-sided Hann-windowed Welch estimate; sum(density) * df ~ variance.

    ``segment_len`` defaults to 4 s of samples, capped at the signal length.
    """
    n = s.samples.size
    if segment_len is None:
        segment_len = min(int(round(WELCH_SEGMENT_S * s.rate)), n)
    if segment_len > n:
        raise SegmentTooLong(f"segment of {segment_len} samples exceeds signal of {n}")
    if segment_len < 2:
        raise SegmentTooLong("signal too short for a spectral estimate")
    if not 0 <= overlap < 1:
        raise ValueError(f"overlap must be in [0, 1), got {overlap}")
    noverlap = int(np.floor(segment_len * overlap))
    freqs, dens = sps.welch(
        s.samples, fs=s.rate, window="hann", nperseg=segment_len, noverlap=noverlap,
        nfft=nfft, detrend="constant", scaling="density", return_onesided=True,
    )
    return PowerSpectrum(freqs, np.maximum(dens, 0.0))


def band_power(p: PowerSpectrum, lo: float, hi: float) -> float:
    """Trapezoidal integral of the density over [lo, hi] with linear edge interpolation."""
    if not 0 <= lo < hi:
        raise ValueError(f"invalid band ({lo}, {hi})")
    f, d = p.freqs, p.density
    lo_c, hi_c = max(lo, f[0]), min(hi, f[-1])
    if hi_c <= lo_c:
        return 0.0
    inner = (f > lo_c) & (f < hi_c)
    ff = np.concatenate(([lo_c], f[inner], [hi_c]))
    dd = np.concatenate(([np.interp(lo_c, f, d)], d[inner], [np.interp(hi_c, f, d)]))
    return float(np.trapezoid(dd, ff))


def total_power(p: PowerSpectrum) -> float:
    return float(np.trapezoid(p.density, p.freqs)) if p.freqs.size > 1 else 0.0


def smoothing_taps(cutoff_hz: float, rate: float, max_len: int | None = None) -> int:
    """Tap count giving a transition band of roughly 0.8 x cutoff."""
    return odd_taps(4.0 * rate / cutoff_hz, maximum=None if max_len is None else max(11, max_len))


def amplitude_envelope(s: Signal, smooth_cutoff_hz: float) -> Signal:
    """Analytic-signal magnitude followed by a low-pass FIR smoother."""
    if not 0 < smooth_cutoff_hz < s.rate / 2:
        raise InvalidCutoff(f"smoothing cutoff {smooth_cutoff_hz} outside (0, {s.rate / 2})")
    if s.samples.size == 0:
        return Signal(s.samples.copy(), s.rate)
    mag = np.abs(sps.hilbert(s.samples))
    ntaps = smoothing_taps(smooth_cutoff_hz, s.rate)
    taps = design_lowpass_fir(smooth_cutoff_hz, ntaps, s.rate).taps
    return Signal(_fir_apply(mag, taps), s.rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, rate: float, fmin: float = 0.0,
                   fmax: float | None = None) -> np.ndarray:
    """Triangular HTK-mel filters sampled at the rfft bin frequencies, shape (n_mels, n_fft//2+1)."""
    fmax = rate / 2 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bins = np.fft.rfftfreq(n_fft, 1.0 / rate)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (bins[None, :] - lo) / (mid - lo)
    down = (hi - bins[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


def dct2_ortho(x: np.ndarray) -> np.ndarray:
    """Orthonormal DCT-II along the last axis."""
    n = x.shape[-1]
    k = np.arange(n)[:, None]
    basis = np.cos(np.pi * k * (2 * np.arange(n)[None, :] + 1) / (2 * n))
    scale = np.full(n, np.sqrt(2.0 / n))
    scale[0] = np.sqrt(1.0 / n)
    return (x @ basis.T) * scale


def frame_count(n: int, frame_len: int, hop: int) -> int:
    return (n - frame_len) // hop + 1 if n >= frame_len else 0


def mfcc(s: Signal, n_mels: int = 26, n_coeffs: int = 13, frame_len: int | None = None,
         hop: int | None = None) -> np.ndarray:
    """MFCC matrix of shape (frames, n_coeffs).

    Defaults: 25 ms frames, 10 ms hop. Per frame: Hann window, power of the
    magnitude spectrum, triangular mel filterbank, log (floor 1e-10),
    orthonormal DCT-II, first ``n_coeffs``.
    """
    if frame_len is None:
        frame_len = int(round(0.025 * s.rate))
    if hop is None:
        hop = int(round(0.010 * s.rate))
    if frame_len > s.samples.size:
        raise FrameTooLong(f"frame of {frame_len} samples exceeds signal of {s.samples.size}")
    if n_coeffs > n_mels:
        raise ValueError("n_coeffs must not exceed n_mels")
    n_frames = frame_count(s.samples.size, frame_len, hop)
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = s.samples[idx] * np.hanning(frame_len)[None, :]
    n_fft = 1 << int(np.ceil(np.log2(frame_len)))
    # unnormalized periodogram, the usual speech-toolkit convention
    power = np.abs(np.fft.rfft(frames, n=n_fft, axis=1)) ** 2
    energies = power @ mel_filterbank(n_mels, n_fft, s.rate).T
    logs = np.log(np.maximum(energies, 1e-10))
    return dct2_ortho(logs)[:, :n_coeffs]
