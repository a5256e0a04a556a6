"""Second-order gradient boosting with exact greedy regression trees."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_softmax, logit, softmax

from ..errors import NonFiniteTarget, TooFewRows
from .forest import MIN_TRAIN_ROWS, class_weights, validate_classification
from .matrix import FeatureMatrix
from .tree import check_arity, grow_gradient_tree, presort

HESSIAN_FLOOR = 1e-16
PROB_CLIP = 1e-15


class Loss(str, enum.Enum):
    LOGISTIC = "logistic"
    SOFTMAX = "softmax"
    SQUARED = "squared"


@dataclass(frozen=True)
class GbmConfig:
    n_stages: int = 100
    learning_rate: float = 0.3
    max_depth: int = 6
    min_child_weight: float = 1.0
    l2_reg: float = 1.0
    balanced: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class GbmModel:
    stages: tuple          # each stage is a tuple of trees, one per output column
    learning_rate: float
    base_score: np.ndarray  # one entry per output column
    loss: Loss
    n_features: int
    seed: int = 0
    train_loss: tuple = field(default=())  # loss before any stage, then after each

    @property
    def n_classes(self) -> int:
        return 0 if self.loss is Loss.SQUARED else max(2, self.base_score.size)

    def raw_score(self, X) -> np.ndarray:
        X = check_arity(X, self.n_features)
        f = np.tile(self.base_score, (X.shape[0], 1))
        for stage in self.stages:
            for k, t in enumerate(stage):
                f[:, k] += self.learning_rate * t.predict(X)[:, 0]
        return f

    def predict_proba(self, X) -> np.ndarray:
        if self.loss is Loss.SQUARED:
            raise TypeError("regression model has no class probabilities")
        f = self.raw_score(X)
        if self.loss is Loss.LOGISTIC:
            p1 = expit(f[:, 0])
            return np.column_stack([1.0 - p1, p1])
        return softmax(f, axis=1)

    def predict_regression(self, X) -> np.ndarray:
        if self.loss is not Loss.SQUARED:
            raise TypeError("classification model; use predict_proba")
        return self.raw_score(X)[:, 0]


def _loss_value(loss: Loss, f: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    if loss is Loss.SQUARED:
        return float(np.sum(w * 0.5 * (f[:, 0] - y) ** 2) / w.sum())
    if loss is Loss.LOGISTIC:
        z = f[:, 0]
        # log(1 + e^z) - y z, stable
        return float(np.sum(w * (np.logaddexp(0.0, z) - y * z)) / w.sum())
    lp = log_softmax(f, axis=1)
    return float(-np.sum(w * lp[np.arange(y.size), y]) / w.sum())


def _grad_hess(loss: Loss, f: np.ndarray, y: np.ndarray):
    if loss is Loss.SQUARED:
        return (f - y[:, None]), np.ones_like(f)
    if loss is Loss.LOGISTIC:
        p = expit(f)
        return p - y[:, None], np.maximum(p * (1.0 - p), HESSIAN_FLOOR)
    p = softmax(f, axis=1)
    onehot = np.zeros_like(p)
    onehot[np.arange(y.size), y] = 1.0
    return p - onehot, np.maximum(p * (1.0 - p), HESSIAN_FLOOR)


def _base_score(loss: Loss, y: np.ndarray, w: np.ndarray, n_classes: int) -> np.ndarray:
    if loss is Loss.SQUARED:
        return np.array([np.average(y, weights=w)])
    prior = np.bincount(y, weights=w, minlength=n_classes) / w.sum()
    prior = np.clip(prior, PROB_CLIP, 1.0 - PROB_CLIP)
    if loss is Loss.LOGISTIC:
        return np.array([logit(prior[1])])
    return np.log(prior)


def train_gradient_boosting(m: FeatureMatrix, config: GbmConfig = GbmConfig(),
                            regression: bool = False) -> GbmModel:
    """Boost on ``m.targets``; classification picks logistic or softmax from the class count."""
    if regression:
        if m.n_rows < MIN_TRAIN_ROWS:
            raise TooFewRows(f"need at least {MIN_TRAIN_ROWS} rows, got {m.n_rows}")
        if np.isnan(m.X).any():
            raise ValueError("absent values must be imputed before training")
        y = np.asarray(m.targets, dtype=float)
        if not np.all(np.isfinite(y)):
            raise NonFiniteTarget("regression targets must be finite")
        loss, n_out, n_classes = Loss.SQUARED, 1, 0
        w = np.ones(y.size)
    else:
        y, n_classes = validate_classification(m)
        loss = Loss.LOGISTIC if n_classes == 2 else Loss.SOFTMAX
        n_out = 1 if loss is Loss.LOGISTIC else n_classes
        w = class_weights(y, n_classes) if config.balanced else np.ones(y.size)
    base = _base_score(loss, y, w, n_classes)
    X = m.X
    order = presort(X)
    f = np.tile(base, (y.size, 1))
    history = [_loss_value(loss, f, y, w)]
    stages = []
    for _ in range(config.n_stages):
        g, h = _grad_hess(loss, f, y)
        g, h = g * w[:, None], h * w[:, None]
        trees = []
        for k in range(n_out):
            t = grow_gradient_tree(X, order, g[:, k], h[:, k], config.max_depth,
                                   config.min_child_weight, config.l2_reg)
            trees.append(t)
        for k, t in enumerate(trees):
            f[:, k] += config.learning_rate * t.predict(X)[:, 0]
        stages.append(tuple(trees))
        history.append(_loss_value(loss, f, y, w))
    return GbmModel(tuple(stages), config.learning_rate, base, loss, m.n_features,
                    config.seed, tuple(history))
