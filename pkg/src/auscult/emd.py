"""Empirical Mode Decomposition by sifting, PSD-based IMF band assignment and
derivation of the six per-recording biosignals."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from . import dsp
from .dsp import Signal
from .errors import DecompositionDegenerate

log = logging.getLogger(__name__)

PHYSIO_BANDS = ((0.1, 1.5), (1.0, 5.0), (5.0, 10.0), (10.0, 20.0), (20.0, 100.0), (250.0, 1000.0))
LOW_BANDS = PHYSIO_BANDS[:4]
HIGH_BANDS = PHYSIO_BANDS[4:]

NEGLIGIBLE_ENERGY = 1e-20

BIOSIGNAL_NAMES = ("respiration_env", "cardiac_env", "imf_heart", "imf_mid1", "imf_mid2", "acoustic")


@dataclass(frozen=True)
class SiftConfig:
    sd_threshold: float = 0.2
    max_sifts: int = 100
    # the sifted component must also pass |extrema - zero crossings| <= 1
    require_imf_property: bool = True


@dataclass(frozen=True)
class EmdConfig:
    max_imfs: int = 12
    sift: SiftConfig = field(default_factory=SiftConfig)
    low_rate: float = 200.0
    in_band_threshold: float = 0.3
    respiration_smooth_hz: float = 1.5
    cardiac_smooth_hz: float = 5.0
    # respiration <- envelope of the (250, 1000) Hz IMF, cardiac <- (20, 100) Hz;
    # True reverses the pairing
    swap_envelope_sources: bool = False


@dataclass(frozen=True, eq=False)
class ImfSet:
    imfs: list
    residual: Signal

    def __len__(self):
        return len(self.imfs)

    def as_array(self) -> np.ndarray:
        n = self.residual.samples.size
        return np.array([imf.samples for imf in self.imfs]).reshape(len(self.imfs), n)

    def reconstruct(self) -> np.ndarray:
        return self.as_array().sum(axis=0) + self.residual.samples


@dataclass(frozen=True)
class BandSelection:
    bands: tuple
    assignments: dict  # band index -> imf index
    fractions: np.ndarray = field(compare=False, repr=False, default=None)  # imfs x bands

    def imf_for(self, band) -> int | None:
        return self.assignments.get(self.bands.index(tuple(band)))


@dataclass(frozen=True, eq=False)
class BiosignalSet:
    respiration_env: Signal
    cardiac_env: Signal
    imf_heart: Signal
    imf_mid1: Signal
    imf_mid2: Signal
    acoustic: Signal
    substituted: tuple = ()  # names of signals that fell back to band-pass filtering

    def signals(self) -> dict:
        return {name: getattr(self, name) for name in BIOSIGNAL_NAMES}

    @property
    def rate(self) -> float:
        return self.acoustic.rate


def find_extrema(x: np.ndarray):
    """Indices of local maxima and minima; plateaus report their first sample."""
    d = np.diff(x)
    left, right = d[:-1], d[1:]
    maxima = np.flatnonzero((left > 0) & (right <= 0)) + 1
    minima = np.flatnonzero((left < 0) & (right >= 0)) + 1
    # a plateau followed by a further rise/fall is not an extremum
    if maxima.size or minima.size:
        maxima = _drop_shoulders(x, maxima, +1)
        minima = _drop_shoulders(x, minima, -1)
    return maxima, minima


def _drop_shoulders(x, idx, sign):
    nz = np.flatnonzero(np.diff(x))
    if nz.size == 0:
        return idx[:0]
    # first index where x changes after position i
    pos = np.searchsorted(nz, idx)
    keep = pos < nz.size
    nxt = np.full(idx.size, 0.0)
    nxt[keep] = x[nz[pos[keep]] + 1] - x[idx[keep]]
    return idx[keep & (sign * nxt < 0)]


def count_zero_crossings(x: np.ndarray) -> int:
    s = np.sign(x)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def imf_property_gap(x: np.ndarray) -> int:
    mx, mn = find_extrema(x)
    return abs(mx.size + mn.size - count_zero_crossings(x))


def _envelope(t_ext: np.ndarray, v_ext: np.ndarray, n: int) -> np.ndarray:
    """Natural cubic spline through the extrema, first/last two mirrored about the ends."""
    last = n - 1
    k = min(2, t_ext.size)
    lt, lv = -t_ext[:k][::-1], v_ext[:k][::-1]
    rt, rv = 2 * last - t_ext[-k:][::-1], v_ext[-k:][::-1]
    t = np.concatenate((lt, t_ext, rt)).astype(float)
    v = np.concatenate((lv, v_ext, rv))
    # an extremum sitting exactly on an end mirrors onto itself
    t, uniq = np.unique(t, return_index=True)
    v = v[uniq]
    if t.size < 2:
        return np.full(n, v[0])
    bc = "natural" if t.size > 2 else "not-a-knot"
    return CubicSpline(t, v, bc_type=bc)(np.arange(n))


def _mean_envelope(h: np.ndarray, maxima, minima) -> np.ndarray:
    n = h.size
    return 0.5 * (_envelope(maxima, h[maxima], n) + _envelope(minima, h[minima], n))


def sift(x: np.ndarray, config: SiftConfig = SiftConfig()) -> tuple[np.ndarray, int]:
    """Extract one IMF candidate from ``x``. Returns (imf, sift iterations)."""
    h = x.copy()
    for it in range(1, config.max_sifts + 1):
        maxima, minima = find_extrema(h)
        if maxima.size == 0 or minima.size == 0:
            return h, it - 1
        h_new = h - _mean_envelope(h, maxima, minima)
        denom = np.dot(h, h)
        sd = np.dot(h - h_new, h - h_new) / denom if denom > 0 else 0.0
        h = h_new
        if sd < config.sd_threshold and (not config.require_imf_property or imf_property_gap(h) <= 1):
            return h, it
    return h, config.max_sifts


def emd_decompose(s: Signal, max_imfs: int = 12, sift_config: SiftConfig = SiftConfig()) -> ImfSet:
    """Decompose ``s`` into IMFs (highest frequency first) and a residual.

    Decomposition stops when the residual has fewer than two extrema (one max
    and one min), when ``max_imfs`` is reached, or when the residual or the
    next candidate IMF carries only round-off level energy.
    """
    x = s.samples
    residual = x.copy()
    imfs = []
    if x.size < 16:
        return ImfSet([], Signal(residual, s.rate))
    scale = np.dot(x, x)
    while len(imfs) < max_imfs:
        maxima, minima = find_extrema(residual)
        if maxima.size == 0 or minima.size == 0:
            break
        if np.dot(residual, residual) <= NEGLIGIBLE_ENERGY * scale:
            break
        imf, _ = sift(residual, sift_config)
        # extrema at round-off level on a smooth trend: nothing left to extract
        if np.dot(imf, imf) <= NEGLIGIBLE_ENERGY * scale:
            break
        imfs.append(Signal(imf, s.rate))
        residual = residual - imf
    return ImfSet(imfs, Signal(residual, s.rate))


def band_fractions(imfset: ImfSet, bands=PHYSIO_BANDS) -> np.ndarray:
    """In-band Welch power fraction, shape (n_imfs, n_bands)."""
    out = np.zeros((len(imfset.imfs), len(bands)))
    for i, imf in enumerate(imfset.imfs):
        p = dsp.welch_psd(imf)
        tot = dsp.total_power(p)
        if tot <= 0:
            continue
        for j, (lo, hi) in enumerate(bands):
            out[i, j] = dsp.band_power(p, lo, hi) / tot
    return out


def select_imfs_by_band(imfset: ImfSet, bands=PHYSIO_BANDS, threshold: float = 0.3) -> BandSelection:
    """Assign at most one IMF per band and one band per IMF.

    Candidate (band, imf) pairs with in-band fraction >= ``threshold`` are taken
    greedily in decreasing fraction order, so an IMF that qualifies for two
    bands lands in the one holding more of its power.
    """
    bands = tuple(tuple(map(float, b)) for b in bands)
    frac = band_fractions(imfset, bands)
    pairs = [(-frac[i, j], j, i) for i in range(frac.shape[0]) for j in range(frac.shape[1])
             if frac[i, j] >= threshold]
    assignments, used = {}, set()
    for _, j, i in sorted(pairs):
        if j in assignments or i in used:
            continue
        assignments[j] = i
        used.add(i)
    return BandSelection(bands, dict(sorted(assignments.items())), frac)


def bandpass_fallback(s: Signal, lo: float, hi: float) -> Signal:
    """Zero-phase Hamming FIR band-pass of ``s`` over (lo, hi)."""
    ntaps = dsp.odd_taps(4.0 * s.rate / lo, maximum=max(11, s.samples.size | 1))
    f = dsp.design_bandpass_fir(lo, min(hi, 0.49 * s.rate), ntaps, s.rate)
    return dsp.filter_signal(s, f)


def _match_length(sig: Signal, n: int) -> Signal:
    x = sig.samples
    if x.size >= n:
        return Signal(x[:n], sig.rate)
    return Signal(np.pad(x, (0, n - x.size)), sig.rate)


def derive_biosignals(s: Signal, config: EmdConfig = EmdConfig()) -> BiosignalSet:
    """Six biosignals from a preprocessed recording.

    Sub-20 Hz IMFs come from a decomposition at ``config.low_rate``; the two
    envelope sources come from a decomposition at the working rate. Bands with
    no qualifying IMF are replaced by a band-pass of the input.
    """
    n = s.samples.size
    hi_set = emd_decompose(s, config.max_imfs, config.sift)
    low = dsp.resample(s, config.low_rate)
    lo_set = emd_decompose(low, config.max_imfs, config.sift)
    if len(hi_set) == 0 and len(lo_set) == 0:
        raise DecompositionDegenerate("EMD produced no IMFs")

    substituted = []
    hi_sel = select_imfs_by_band(hi_set, HIGH_BANDS, config.in_band_threshold) if len(hi_set) else None
    lo_sel = select_imfs_by_band(lo_set, LOW_BANDS, config.in_band_threshold) if len(lo_set) else None

    def pick(imfset, sel, band, base, name):
        idx = sel.imf_for(band) if sel is not None else None
        if idx is not None:
            return imfset.imfs[idx]
        log.warning("no IMF for band %s; substituting band-pass for %s", band, name)
        substituted.append(name)
        return bandpass_fallback(base, *band)

    card_band, resp_band = HIGH_BANDS
    if config.swap_envelope_sources:
        resp_band, card_band = card_band, resp_band
    resp_src = pick(hi_set, hi_sel, resp_band, s, "respiration_env")
    card_src = pick(hi_set, hi_sel, card_band, s, "cardiac_env")
    low_sigs = [pick(lo_set, lo_sel, band, low, name)
                for band, name in zip(LOW_BANDS[1:], ("imf_heart", "imf_mid1", "imf_mid2"))]

    def up(sig):
        return _match_length(dsp.resample(sig, s.rate), n)

    return BiosignalSet(
        respiration_env=dsp.amplitude_envelope(resp_src, config.respiration_smooth_hz),
        cardiac_env=dsp.amplitude_envelope(card_src, config.cardiac_smooth_hz),
        imf_heart=up(low_sigs[0]),
        imf_mid1=up(low_sigs[1]),
        imf_mid2=up(low_sigs[2]),
        acoustic=s,
        substituted=tuple(substituted),
    )


def export_wavs(directory, named_signals: dict) -> list:
    """Write each signal as float32 WAV for inspection."""
    from .wav import encode_wav

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, sig in named_signals.items():
        p = directory / f"{name}.wav"
        p.write_bytes(encode_wav(sig.samples, sig.rate))
        paths.append(p)
    return paths
