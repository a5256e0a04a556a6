"""Window-by-feature matrix shared by training and evaluation."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Rows are windows; NaN marks an absent value until imputation.

    ``targets`` holds dense class labels (int) or reals, or None before a task is attached.
    """

    X: np.ndarray
    feature_names: tuple
    group_ids: np.ndarray
    recordings: tuple
    window_index: np.ndarray
    targets: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be 2-D")
        n, p = X.shape
        if len(self.feature_names) != p:
            raise ValueError(f"{len(self.feature_names)} names for {p} columns")
        g = np.asarray(self.group_ids, dtype=np.int64)
        if g.shape != (n,) or len(self.recordings) != n or len(self.window_index) != n:
            raise ValueError("row metadata must have one entry per row")
        if n == 0:
            raise ValueError("feature matrix has no rows")
        if np.isinf(X).any():
            raise ValueError("infinite values are not allowed; use NaN for absent")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "group_ids", g)
        object.__setattr__(self, "recordings", tuple(self.recordings))
        object.__setattr__(self, "window_index", np.asarray(self.window_index, dtype=np.int64))
        if self.targets is not None:
            t = np.asarray(self.targets)
            if t.shape != (n,):
                raise ValueError("one target per row required")
            object.__setattr__(self, "targets", t)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        return FeatureMatrix(
            self.X[rows], self.feature_names, self.group_ids[rows],
            tuple(self.recordings[i] for i in rows), self.window_index[rows],
            None if self.targets is None else self.targets[rows],
        )

    def with_X(self, X) -> "FeatureMatrix":
        return replace(self, X=X)

    def with_targets(self, targets) -> "FeatureMatrix":
        return replace(self, targets=targets)

    @classmethod
    def from_vectors(cls, names, vectors, targets=None) -> "FeatureMatrix":
        X = np.vstack([v.values for v in vectors]) if vectors else np.empty((0, len(names)))
        return cls(X, tuple(names), [v.patient_id for v in vectors],
                   [v.recording for v in vectors], [v.window_index for v in vectors], targets)
