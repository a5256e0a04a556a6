"""Fractal and entropy descriptors of a window."""
from __future__ import annotations

import math

import numpy as np

from .. import dsp
from ..dsp import Signal
from .basic import finite_or_none, mean_of, subwindows

HIGUCHI_KMAX = 10
DFA_MIN_BOX = 4
DFA_N_BOXES = 12
EMBED_DIM = 2
EMBED_DELAY = 1
TOLERANCE_FACTOR = 0.2
PERM_ORDER = 3
# ApEn/SampEn are quadratic in length; longer windows are truncated to this
ENTROPY_MAX_SAMPLES = 2000


def katz_fd(x: np.ndarray) -> float | None:
    dists = np.abs(np.diff(x))
    path = dists.sum()
    if path <= 0:
        return None
    steps = dists.size
    d = np.max(np.abs(x[1:] - x[0]))
    ln = math.log10(steps)
    return ln / (ln + math.log10(d / path))


def higuchi_curve(x: np.ndarray, kmax: int = HIGUCHI_KMAX):
    n = x.size
    ks = np.arange(1, kmax + 1)
    lk = np.empty(kmax)
    for i, k in enumerate(ks):
        lengths = []
        for m in range(k):
            seg = x[m::k]
            nseg = seg.size - 1
            if nseg < 1:
                continue
            lengths.append(np.abs(np.diff(seg)).sum() * (n - 1) / (nseg * k) / k)
        lk[i] = np.mean(lengths)
    return ks, lk


def higuchi_fd(x: np.ndarray, kmax: int = HIGUCHI_KMAX) -> float | None:
    if x.size < 2 * kmax:
        return None
    ks, lk = higuchi_curve(x, kmax)
    if np.any(lk <= 0):
        return None
    return float(-np.polyfit(np.log(ks), np.log(lk), 1)[0])


def petrosian_fd(x: np.ndarray) -> float | None:
    n = x.size
    d = np.diff(x)
    if n < 3:
        return None
    n_delta = int(np.count_nonzero(d[1:] * d[:-1] < 0))
    return math.log10(n) / (math.log10(n) + math.log10(n / (n + 0.4 * n_delta)))


def dfa_boxes(n: int) -> np.ndarray:
    hi = n // 4
    if hi < DFA_MIN_BOX:
        return np.array([], dtype=int)
    return np.unique(np.floor(np.logspace(np.log10(DFA_MIN_BOX), np.log10(hi), DFA_N_BOXES)).astype(int))


def dfa_fluctuations(x: np.ndarray):
    """Box sizes and RMS fluctuation of the linearly detrended profile."""
    y = np.cumsum(x - np.mean(x))
    boxes = dfa_boxes(x.size)
    flucts = np.empty(boxes.size)
    for i, s in enumerate(boxes):
        nb = y.size // s
        seg = y[: nb * s].reshape(nb, s)
        t = np.arange(s) - (s - 1) / 2.0
        slope = seg @ t / np.dot(t, t)
        resid = seg - seg.mean(axis=1, keepdims=True) - slope[:, None] * t[None, :]
        flucts[i] = np.sqrt(np.mean(resid ** 2))
    return boxes, flucts


def dfa_alpha(x: np.ndarray) -> float | None:
    boxes, flucts = dfa_fluctuations(x)
    if boxes.size < 2 or np.any(flucts <= 0):
        return None
    return float(np.polyfit(np.log(boxes), np.log(flucts), 1)[0])


FRACTAL_BASE = ("katz", "higuchi", "petrosian", "dfa")
FRACTAL_NAMES = (FRACTAL_BASE + tuple(f"sw_mean_{n}" for n in FRACTAL_BASE)
                 + tuple(f"sw_std_{n}" for n in FRACTAL_BASE))


def _fractals(x):
    return {"katz": katz_fd(x), "higuchi": higuchi_fd(x), "petrosian": petrosian_fd(x), "dfa": dfa_alpha(x)}


def fractal_features(w: Signal) -> dict:
    out = {k: finite_or_none(v) for k, v in _fractals(w.samples).items()}
    subs = [_fractals(c) for c in subwindows(w.samples)]
    for k in FRACTAL_BASE:
        vals = [v for v in (finite_or_none(s[k]) for s in subs) if v is not None]
        out[f"sw_mean_{k}"] = finite_or_none(np.mean(vals)) if vals else None
        out[f"sw_std_{k}"] = finite_or_none(np.std(vals)) if vals else None
    return out


def permutation_entropy(x: np.ndarray, order: int = PERM_ORDER, delay: int = 1) -> float | None:
    n = x.size - (order - 1) * delay
    if n < 1:
        return None
    emb = np.stack([x[i * delay : i * delay + n] for i in range(order)], axis=1)
    # encode each ordinal pattern as an integer
    ranks = np.argsort(emb, axis=1, kind="stable")
    codes = ranks @ (order ** np.arange(order))
    _, counts = np.unique(codes, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum() / math.log(math.factorial(order)))


def spectral_entropy(w: Signal) -> float | None:
    p = dsp.welch_psd(w)
    tot = p.density.sum()
    if tot <= 0:
        return None
    q = p.density / tot
    q = q[q > 0]
    return float(-(q * np.log(q)).sum() / math.log(p.density.size))


def _match_counts(x: np.ndarray, m: int, r: float, n_templates: int, chunk: int = 512) -> np.ndarray:
    """Per-template count of templates within Chebyshev distance r (self included)."""
    emb = np.stack([x[k : k + n_templates] for k in range(m)], axis=1)
    counts = np.empty(n_templates, dtype=np.int64)
    for start in range(0, n_templates, chunk):
        block = emb[start : start + chunk]
        dist = np.abs(block[:, None, 0] - emb[None, :, 0])
        for k in range(1, m):
            np.maximum(dist, np.abs(block[:, None, k] - emb[None, :, k]), out=dist)
        counts[start : start + chunk] = np.count_nonzero(dist <= r, axis=1)
    return counts


def sample_entropy(x: np.ndarray, m: int = EMBED_DIM, r: float | None = None) -> float | None:
    x = x[:ENTROPY_MAX_SAMPLES]
    sd = np.std(x)
    if sd == 0 or x.size <= m + 1:
        return None
    r = TOLERANCE_FACTOR * sd if r is None else r
    nt = x.size - m
    b = _match_counts(x, m, r, nt).sum() - nt
    a = _match_counts(x, m + 1, r, nt).sum() - nt
    if a == 0 or b == 0:
        return None
    return float(-math.log(a / b))


def approximate_entropy(x: np.ndarray, m: int = EMBED_DIM, r: float | None = None) -> float | None:
    x = x[:ENTROPY_MAX_SAMPLES]
    sd = np.std(x)
    if sd == 0 or x.size <= m + 1:
        return None
    r = TOLERANCE_FACTOR * sd if r is None else r
    n = x.size

    def phi(mm):
        nt = n - mm + 1
        return np.mean(np.log(_match_counts(x, mm, r, nt) / nt))

    return float(phi(m) - phi(m + 1))


def hjorth(x: np.ndarray):
    act = float(np.var(x))
    dx = np.diff(x)
    ddx = np.diff(dx)
    vdx, vddx = np.var(dx), np.var(ddx)
    mob = math.sqrt(vdx / act) if act > 0 else None
    comp = math.sqrt(vddx / vdx) / mob if (mob and vdx > 0) else None
    return act, mob, comp


def zero_crossings(x: np.ndarray) -> int:
    s = np.sign(x)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


ENTROPY_NAMES = ("permutation", "spectral", "approximate", "sample", "hjorth_activity",
                 "hjorth_mobility", "hjorth_complexity", "zero_crossings",
                 "tolerance_r", "embedding_dim", "embedding_delay")
# cheap measures also averaged over sub-windows
ENTROPY_SUB_BASE = ("permutation", "spectral", "hjorth_mobility", "hjorth_complexity", "zero_crossings")
ENTROPY_NAMES = ENTROPY_NAMES + tuple(f"sw_mean_{n}" for n in ENTROPY_SUB_BASE)


def _cheap_entropies(x: np.ndarray, rate: float) -> dict:
    _, mob, comp = hjorth(x)
    return {
        "permutation": permutation_entropy(x),
        "spectral": spectral_entropy(Signal(x, rate)) if x.size >= 8 else None,
        "hjorth_mobility": mob,
        "hjorth_complexity": comp,
        "zero_crossings": float(zero_crossings(x)),
    }


def entropy_features(w: Signal) -> dict:
    x = w.samples
    act, mob, comp = hjorth(x)
    out = {
        "permutation": finite_or_none(permutation_entropy(x)),
        "spectral": finite_or_none(spectral_entropy(w)),
        "approximate": finite_or_none(approximate_entropy(x)),
        "sample": finite_or_none(sample_entropy(x)),
        "hjorth_activity": act,
        "hjorth_mobility": finite_or_none(mob),
        "hjorth_complexity": finite_or_none(comp),
        "zero_crossings": float(zero_crossings(x)),
        "tolerance_r": float(TOLERANCE_FACTOR * np.std(x[:ENTROPY_MAX_SAMPLES])),
        "embedding_dim": float(EMBED_DIM),
        "embedding_delay": float(EMBED_DELAY),
    }
    subs = [_cheap_entropies(c, w.rate) for c in subwindows(x)]
    for k in ENTROPY_SUB_BASE:
        out[f"sw_mean_{k}"] = finite_or_none(mean_of(finite_or_none(s[k]) for s in subs))
    return out
