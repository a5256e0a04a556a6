"""Random forest classifier grown from bootstrap samples of Gini trees."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from ..errors import SingleClassTraining, TooFewRows
from .matrix import FeatureMatrix
from .tree import check_arity, grow_classification_tree

MIN_TRAIN_ROWS = 10


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    max_features: int | None = None  # None: floor(sqrt(arity)), at least 1
    bootstrap: bool = True
    balanced: bool = False  # inverse class-frequency row weights
    seed: int = 0


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple
    n_classes: int
    n_features: int
    feature_subsample: int
    seed: int
    oob_score: float | None = field(default=None)

    def __post_init__(self):
        if not self.trees:
            raise ValueError("a forest needs at least one tree")
        if any(t.value.shape[1] != self.n_classes for t in self.trees):
            raise ValueError("all trees must share n_classes")

    def predict_proba(self, X) -> np.ndarray:
        X = check_arity(X, self.n_features)
        p = np.zeros((X.shape[0], self.n_classes))
        for t in self.trees:
            p += t.predict(X)
        p /= len(self.trees)
        return p / p.sum(axis=1, keepdims=True)


def class_weights(y: np.ndarray, n_classes: int) -> np.ndarray:
    counts = np.bincount(y, minlength=n_classes).astype(float)
    w = np.where(counts > 0, y.size / (n_classes * np.maximum(counts, 1)), 0.0)
    return w[y]


def validate_classification(m: FeatureMatrix) -> tuple[np.ndarray, int]:
    if m.n_rows < MIN_TRAIN_ROWS:
        raise TooFewRows(f"need at least {MIN_TRAIN_ROWS} rows, got {m.n_rows}")
    if np.isnan(m.X).any():
        raise ValueError("absent values must be imputed before training")
    y = np.asarray(m.targets)
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError("classification targets must be integer labels")
        y = y.astype(np.int64)
    if y.min() < 0:
        raise ValueError("class labels must be non-negative")
    if np.unique(y).size < 2:
        raise SingleClassTraining(f"training rows contain only class {int(y[0])}")
    return y, int(y.max()) + 1


def _grow_one(X, y, n_classes, cfg, k, seed_seq):
    rng = np.random.default_rng(seed_seq)
    n = y.size
    if cfg.bootstrap:
        draws = rng.integers(0, n, size=n)
        w = np.bincount(draws, minlength=n).astype(float)
    else:
        w = np.ones(n)
    if cfg.balanced:
        w = w * class_weights(y, n_classes)
    return grow_classification_tree(X, y, w, n_classes, k, rng, cfg.max_depth), w == 0


def train_random_forest(m: FeatureMatrix, config: ForestConfig = ForestConfig(), jobs: int = 1) -> ForestModel:
    y, n_classes = validate_classification(m)
    p = m.n_features
    k = config.max_features or max(1, int(math.floor(math.sqrt(p))))
    # one independent stream per tree keeps results identical for any job count
    seqs = np.random.SeedSequence(config.seed).spawn(config.n_trees)
    if jobs == 1:
        out = [_grow_one(m.X, y, n_classes, config, k, s) for s in seqs]
    else:
        out = Parallel(n_jobs=jobs)(delayed(_grow_one)(m.X, y, n_classes, config, k, s) for s in seqs)
    trees = tuple(t for t, _ in out)
    oob = None
    if config.bootstrap:
        votes = np.zeros((m.n_rows, n_classes))
        for t, unused in out:
            if unused.any():
                votes[unused] += t.predict(m.X[unused])
        seen = votes.sum(axis=1) > 0
        if seen.any():
            oob = float(np.mean(np.argmax(votes[seen], axis=1) == y[seen]))
    return ForestModel(trees, n_classes, p, k, config.seed, oob)
