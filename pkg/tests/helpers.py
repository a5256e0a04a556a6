"""Seeded signal generators shared by the unit and acceptance suites."""
import itertools
import math

import numpy as np

from auscult.dsp import Signal


def emd_corpus(n=50, length=4000, rate=1000.0, seed=2024):
    """Tones, chirps and noise mixtures, cycling through the three families."""
    rng = np.random.default_rng(seed)
    t = np.arange(length) / rate
    out = []
    for i in range(n):
        kind = i % 3
        if kind == 0:
            f = rng.uniform(2, 120, size=rng.integers(1, 4))
            a = rng.uniform(0.2, 2.0, size=f.size)
            x = sum(ai * np.sin(2 * np.pi * fi * t + rng.uniform(0, 6.28)) for ai, fi in zip(a, f))
        elif kind == 1:
            f0, f1 = rng.uniform(1, 20), rng.uniform(40, 200)
            x = np.sin(2 * np.pi * (f0 * t + (f1 - f0) * t ** 2 / (2 * t[-1])))
            x += 0.3 * np.sin(2 * np.pi * rng.uniform(0.5, 3) * t)
        else:
            x = rng.standard_normal(length) * rng.uniform(0.1, 1.0)
            x += np.sin(2 * np.pi * rng.uniform(3, 60) * t)
        out.append(Signal(x, rate))
    return out


def lung_surrogate(duration_s=30.0, rate=4000, seed=7):
    """300 Hz carrier modulated at 0.25 Hz plus 600 Hz bursts at 1.2 Hz and weak noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(int(duration_s * rate)) / rate
    breath = 1 + 0.8 * np.sin(2 * np.pi * 0.25 * t)
    bursts = np.exp(-0.5 * ((t % (1 / 1.2) - 0.2) / 0.03) ** 2)
    x = breath * np.sin(2 * np.pi * 300 * t) + 0.8 * bursts * np.sin(2 * np.pi * 600 * t)
    return Signal(x + 0.05 * rng.standard_normal(t.size), rate)


def bump_train(spacing_s, duration_s=10.0, rate=100.0, width_s=0.05):
    t = np.arange(int(duration_s * rate)) / rate
    centers = np.arange(spacing_s / 2, duration_s, spacing_s)
    x = sum(np.exp(-0.5 * ((t - c) / width_s) ** 2) for c in centers)
    return Signal(x, rate)


# independent oracles

def dtft_mag(taps, f, rate):
    """Independent oracle: direct DTFT sum evaluated at one frequency."""
    n = np.arange(taps.size)
    return abs(np.sum(taps * np.exp(-2j * np.pi * f / rate * n)))


def sine_fit_amplitude(x, f, rate):
    """Least-squares amplitude of a sinusoid at a known frequency."""
    t = np.arange(x.size) / rate
    A = np.column_stack([np.sin(2 * np.pi * f * t), np.cos(2 * np.pi * f * t), np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(A, x, rcond=None)
    return float(np.hypot(coef[0], coef[1]))


def katz_loop(x):
    L = sum(abs(x[i + 1] - x[i]) for i in range(len(x) - 1))
    d = max(abs(x[i] - x[0]) for i in range(1, len(x)))
    n = len(x) - 1
    return math.log10(n) / (math.log10(n) + math.log10(d / L))


def petrosian_loop(x):
    d = [x[i + 1] - x[i] for i in range(len(x) - 1)]
    nd = sum(1 for i in range(len(d) - 1) if d[i] * d[i + 1] < 0)
    n = len(x)
    return math.log10(n) / (math.log10(n) + math.log10(n / (n + 0.4 * nd)))


def sampen_loop(x, m=2, rf=0.2):
    r = rf * np.std(x)
    n = len(x)

    def count(mm):
        c = 0
        for i in range(n - m):
            for j in range(n - m):
                if i != j and max(abs(x[i + k] - x[j + k]) for k in range(mm)) <= r:
                    c += 1
        return c

    return -math.log(count(m + 1) / count(m))


def brute_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p, q in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))
