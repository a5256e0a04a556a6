"""Imputation of absent values, winsorizing and standardization."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .matrix import FeatureMatrix

log = logging.getLogger(__name__)

CLIP_SIGMAS = 5.0


def column_means(X: np.ndarray) -> np.ndarray:
    """Mean over present entries; NaN for columns with none."""
    present = ~np.isnan(X)
    counts = present.sum(axis=0)
    sums = np.where(present, X, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def impute_missing(m: FeatureMatrix, means: np.ndarray | None = None) -> FeatureMatrix:
    """Forward-fill within each recording's window order, then column means, then 0.

    ``means`` overrides the fallback column means, e.g. train-fold means for a test fold.
    """
    X = m.X.copy()
    if not np.isnan(X).any():
        return m
    means = column_means(m.X) if means is None else np.asarray(means, dtype=float)
    keys = list(zip(m.group_ids.tolist(), m.recordings))
    groups: dict = {}
    for i, k in enumerate(keys):
        groups.setdefault(k, []).append(i)
    for rows in groups.values():
        rows = np.asarray(rows)[np.argsort(m.window_index[rows], kind="stable")]
        block = X[rows]
        # index of last present row at or before each position
        idx = np.where(~np.isnan(block), np.arange(len(rows))[:, None], -1)
        np.maximum.accumulate(idx, axis=0, out=idx)
        filled = np.take_along_axis(block, np.maximum(idx, 0), axis=0)
        X[rows] = np.where(idx >= 0, filled, np.nan)
    empty = np.isnan(means)
    if empty.any():
        names = [m.feature_names[j] for j in np.flatnonzero(empty)]
        log.warning("%d feature columns entirely absent, set to 0: %s", len(names), ", ".join(names[:5]))
    fill = np.where(empty, 0.0, means)
    nan_r, nan_c = np.nonzero(np.isnan(X))
    X[nan_r, nan_c] = fill[nan_c]
    return m.with_X(X)


@dataclass(frozen=True, eq=False)
class Scaler:
    """Per-feature clip bounds and z-score parameters fit on training rows."""

    lower: np.ndarray
    upper: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, n_sigmas: float = CLIP_SIGMAS) -> "Scaler":
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        lower, upper = mu - n_sigmas * sd, mu + n_sigmas * sd
        clipped = np.clip(X, lower, upper)
        return cls(lower, upper, clipped.mean(axis=0), clipped.std(axis=0))

    @property
    def constant(self) -> np.ndarray:
        return self.std == 0

    def transform(self, X: np.ndarray) -> np.ndarray:
        const = self.constant
        clipped = np.clip(X, self.lower, self.upper)
        z = (clipped - self.mean) / np.where(const, 1.0, self.std)
        return np.where(const, X, z)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("lower", "upper", "mean", "std")}

    @classmethod
    def from_dict(cls, d) -> "Scaler":
        return cls(*(np.asarray(d[k], dtype=float) for k in ("lower", "upper", "mean", "std")))


def clip_and_standardize(train: FeatureMatrix, apply_to: FeatureMatrix) -> tuple[Scaler, FeatureMatrix]:
    if np.isnan(train.X).any():
        raise ValueError("impute_missing must run before clip_and_standardize")
    scaler = Scaler.fit(train.X)
    return scaler, apply_to.with_X(scaler.transform(apply_to.X))
