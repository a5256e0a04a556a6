"""Versioned feature registry and window-by-window feature matrix extraction."""
from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass

import numpy as np

from .. import dsp
from ..dsp import Signal
from ..emd import BIOSIGNAL_NAMES, BiosignalSet
from .basic import (
    MFCC_NAMES,
    SPECTRAL_SUB_NAMES,
    STAT_NAMES,
    STAT_SUB_NAMES,
    WindowPlan,
    mfcc_features,
    segment_windows,
    spectral_features,
    spectral_names,
    stat_features,
)
from .cardio import HRV_NAMES, RESPIRATION_NAMES, respiration_features, window_hrv
from .nonlinear import ENTROPY_NAMES, FRACTAL_NAMES, entropy_features, fractal_features

REGISTRY_VERSION = "v1"
PHYSIO_FEATURE_RATE = 100.0
ACOUSTIC_FEATURE_RATE = 4000.0
# frozen arity of registry v1; changing any family requires a new version
REGISTRY_V1_SIZE = 521
ID_COLUMNS = ("patient_id", "recording", "window_index")


@dataclass(frozen=True)
class FeatureEntry:
    name: str
    source: str
    family: str


@dataclass(frozen=True)
class FeatureRegistry:
    version: str
    entries: tuple
    physio_rate: float = PHYSIO_FEATURE_RATE
    acoustic_rate: float = ACOUSTIC_FEATURE_RATE

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(names) != len(set(names)):
            raise ValueError("feature names must be unique")

    def __len__(self):
        return len(self.entries)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def rate_for(self, source: str) -> float:
        return self.acoustic_rate if source == "acoustic" else self.physio_rate

    def fingerprint(self) -> str:
        h = hashlib.sha256(self.version.encode())
        for e in self.entries:
            h.update(f"{e.name}|{e.source}|{e.family}\n".encode())
        return h.hexdigest()[:16]


def _per_signal_families(rate: float):
    return (
        ("stat", STAT_NAMES + STAT_SUB_NAMES),
        ("spectral", spectral_names(rate) + SPECTRAL_SUB_NAMES),
        ("fractal", FRACTAL_NAMES),
        ("entropy", ENTROPY_NAMES),
    )


def build_registry(version: str = REGISTRY_VERSION, physio_rate: float = PHYSIO_FEATURE_RATE,
                   acoustic_rate: float = ACOUSTIC_FEATURE_RATE) -> FeatureRegistry:
    if version != "v1":
        raise ValueError(f"unknown registry version {version!r}")
    entries = []
    for source in BIOSIGNAL_NAMES:
        rate = acoustic_rate if source == "acoustic" else physio_rate
        for family, names in _per_signal_families(rate):
            entries += [FeatureEntry(f"{source}.{family}.{n}", source, family) for n in names]
    entries += [FeatureEntry(f"acoustic.mfcc.{n}", "acoustic", "mfcc") for n in MFCC_NAMES]
    entries += [FeatureEntry(f"cardiac_env.hrv.{n}", "cardiac_env", "hrv") for n in HRV_NAMES]
    entries += [FeatureEntry(f"respiration_env.respiration.{n}", "respiration_env", "respiration")
                for n in RESPIRATION_NAMES]
    return FeatureRegistry(version, tuple(entries), physio_rate, acoustic_rate)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray  # registry order, NaN marks an absent value
    window_index: int
    patient_id: int
    recording: str

    @property
    def absent(self) -> np.ndarray:
        return np.isnan(self.values)


def _window_families(source: str, w: Signal) -> dict:
    out = {}
    for family, fn in (("stat", stat_features), ("spectral", spectral_features),
                       ("fractal", fractal_features), ("entropy", entropy_features)):
        out.update({f"{source}.{family}.{k}": v for k, v in fn(w).items()})
    if source == "acoustic":
        out.update({f"acoustic.mfcc.{k}": v for k, v in mfcc_features(w).items()})
    elif source == "cardiac_env":
        out.update({f"cardiac_env.hrv.{k}": v for k, v in window_hrv(w).items()})
    elif source == "respiration_env":
        out.update({f"respiration_env.respiration.{k}": v for k, v in respiration_features(w).items()})
    return out


def feature_signals(bset: BiosignalSet, registry: FeatureRegistry) -> dict:
    """The six signals at their feature rates."""
    out = {}
    for name, sig in bset.signals().items():
        rate = registry.rate_for(name)
        out[name] = sig if np.isclose(sig.rate, rate) else dsp.resample(sig, rate)
    return out


def extract_feature_matrix(bset: BiosignalSet, plan: WindowPlan = WindowPlan(),
                           registry: FeatureRegistry | None = None, patient_id: int = 0,
                           recording: str = "") -> list[FeatureVector]:
    """One FeatureVector per window; failed features are absent (NaN)."""
    registry = registry or build_registry()
    sigs = feature_signals(bset, registry)
    windows = {name: segment_windows(sig, plan) for name, sig in sigs.items()}
    n_win = min(len(w) for w in windows.values())
    index = {name: i for i, name in enumerate(registry.names)}
    vectors = []
    for k in range(n_win):
        values = np.full(len(registry), np.nan)
        for source in BIOSIGNAL_NAMES:
            for name, v in _window_families(source, windows[source][k]).items():
                i = index.get(name)
                if i is not None and v is not None and np.isfinite(v):
                    values[i] = v
        vectors.append(FeatureVector(values, k, patient_id, recording))
    return vectors


def _cell(v: float) -> str:
    return "" if np.isnan(v) else repr(float(v))


def write_feature_csv(vectors, registry: FeatureRegistry, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(list(ID_COLUMNS) + registry.names)
    for v in vectors:
        w.writerow([v.patient_id, v.recording, v.window_index] + [_cell(x) for x in v.values])


def feature_csv_text(vectors, registry: FeatureRegistry) -> str:
    buf = io.StringIO()
    write_feature_csv(vectors, registry, buf)
    return buf.getvalue()


def read_feature_csv(fh):
    """Returns (feature names, list of FeatureVector)."""
    r = csv.reader(fh)
    header = next(r)
    if tuple(header[:3]) != ID_COLUMNS:
        raise ValueError(f"feature file must start with columns {ID_COLUMNS}")
    names = header[3:]
    vectors = []
    for row in r:
        vals = np.array([float(c) if c != "" else np.nan for c in row[3:]])
        vectors.append(FeatureVector(vals, int(row[2]), int(row[0]), row[1]))
    return names, vectors
