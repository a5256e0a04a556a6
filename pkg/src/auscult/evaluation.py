"""Leave-one-subject-out evaluation, subject-level aggregation and metrics."""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import rankdata

from .errors import AuscultError, FoldError, OneClassOnly, SinglePatient
from .ingest import TaskKind, TaskSpec
from .models import (
    FeatureMatrix,
    ForestConfig,
    GbmConfig,
    clip_and_standardize,
    impute_missing,
    train_gradient_boosting,
    train_random_forest,
)
from .models.preprocessing import column_means

log = logging.getLogger(__name__)

# published subject-level results the rendered report compares against
REFERENCE_RESULTS = {
    "binary_healthy": {"balanced_accuracy": 0.8764, "f1": 0.9193},
    "binary_copd": {"balanced_accuracy": 0.8956, "f1": 0.9016},
    "six_class": {"balanced_accuracy": 0.7273, "f1": 0.6938},
    "four_class": {"balanced_accuracy": 0.7494, "f1": 0.6888},
    "gender": {"balanced_accuracy": 0.9111, "f1": 0.8942},
    "bmi_regression": {"mae": 3.84, "mae_sd": 3.14, "r2": 0.9475, "rmse": 5.41},
    "age_regression": {"mae": 7.89, "mae_sd": 6.71, "r2": 0.6172, "rmse": 10.44},
}

DEFAULT_MODEL = {
    TaskKind.binary_healthy: "forest",
    TaskKind.six_class: "forest",
    TaskKind.four_class: "forest",
    TaskKind.binary_copd: "gbm",
    TaskKind.gender: "gbm",
    TaskKind.age_regression: "gbm",
    TaskKind.bmi_regression: "gbm",
}


@dataclass(frozen=True, eq=False)
class LosoFold:
    test_patient: int
    train_rows: np.ndarray
    test_rows: np.ndarray


def loso_splits(m: FeatureMatrix) -> list[LosoFold]:
    """One fold per distinct patient, ordered by patient id."""
    patients = np.unique(m.group_ids)
    if patients.size < 2:
        raise SinglePatient("leave-one-subject-out needs at least 2 patients")
    folds = []
    for p in patients:
        test = m.group_ids == p
        folds.append(LosoFold(int(p), np.flatnonzero(~test), np.flatnonzero(test)))
    return folds


def aggregate_subject(window_probs) -> tuple[int, np.ndarray]:
    """Argmax of the mean probability vector; np.argmax already takes the lowest index on ties."""
    p = np.atleast_2d(np.asarray(window_probs, dtype=float))
    if p.shape[0] == 0:
        raise ValueError("need at least one window")
    mean = p.mean(axis=0)
    return int(np.argmax(mean)), mean


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or (c < 0).any():
            raise ValueError("confusion counts must be a non-negative square matrix")
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_labels(cls, truth, pred, n_classes: int) -> "ConfusionMatrix":
        c = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(c, (np.asarray(truth, dtype=int), np.asarray(pred, dtype=int)), 1)
        return cls(c)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def balanced_accuracy(c: ConfusionMatrix) -> float:
    """Mean per-class recall over classes with at least one true instance."""
    support = c.counts.sum(axis=1)
    present = support > 0
    if not present.all():
        warnings.warn(f"classes {np.flatnonzero(~present).tolist()} have no true instances; excluded")
    if not present.any():
        raise ValueError("confusion matrix is empty")
    recall = np.diag(c.counts)[present] / support[present]
    return float(recall.mean())


def _f1_per_class(c: ConfusionMatrix, k: int) -> float | None:
    tp = c.counts[k, k]
    n_true = c.counts[k].sum()
    n_pred = c.counts[:, k].sum()
    if n_true == 0 and n_pred == 0:
        return None
    if tp == 0:
        return 0.0
    prec, rec = tp / n_pred, tp / n_true
    return float(2 * prec * rec / (prec + rec))


def f1_score(c: ConfusionMatrix, averaging: str | None = None, positive: int = 1) -> float:
    """Positive-class F1 for binary matrices and macro F1 otherwise, unless ``averaging`` says."""
    averaging = averaging or ("positive_class" if c.n_classes == 2 else "macro")
    if averaging == "positive_class":
        v = _f1_per_class(c, positive)
        if v is None or v == 0.0:
            warnings.warn("F1 undefined or zero for the positive class; reported as 0")
            return 0.0
        return v
    if averaging != "macro":
        raise ValueError(f"unknown averaging {averaging!r}")
    vals = [v for v in (_f1_per_class(c, k) for k in range(c.n_classes)) if v is not None]
    return float(np.mean(vals)) if vals else 0.0


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC from rank sums; tied scores count one half."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly("AUC needs both positive and negative items")
    ranks = rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_points(scores, labels) -> list[tuple[float, float]]:
    """(fpr, tpr) for thresholds at every distinct score, from (0, 0) to (1, 1)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly("ROC needs both positive and negative items")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    last = np.r_[np.flatnonzero(s[1:] != s[:-1]), s.size - 1]
    pts = [(0.0, 0.0)] + [(fp[i] / n_neg, tp[i] / n_pos) for i in last]
    return [(float(a), float(b)) for a, b in pts]


def multiclass_auc(probs: np.ndarray, labels) -> float:
    """One-vs-rest macro AUC over classes with both positive and negative items."""
    labels = np.asarray(labels)
    vals = []
    for k in range(probs.shape[1]):
        pos = labels == k
        if pos.any() and (~pos).any():
            vals.append(roc_auc(probs[:, k], pos))
    if not vals:
        raise OneClassOnly("no class has both positive and negative items")
    return float(np.mean(vals))


def regression_metrics(preds, truths) -> dict:
    p = np.asarray(preds, dtype=float)
    t = np.asarray(truths, dtype=float)
    if p.shape != t.shape or p.size == 0:
        raise ValueError("predictions and truths must have equal nonzero length")
    e = p - t
    ae = np.abs(e)
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0:
        warnings.warn("constant truth; R2 undefined")
        r2 = None
    else:
        r2 = 1.0 - float(np.sum(e ** 2)) / ss_tot
    return {"mae": float(ae.mean()), "mae_sd": float(ae.std()), "rmse": float(math.sqrt(np.mean(e ** 2))),
            "r2": r2}


@dataclass(frozen=True)
class EvalConfig:
    model_kind: str | None = None  # None picks the per-task default
    seed: int = 0
    forest: ForestConfig = ForestConfig()
    gbm: GbmConfig = GbmConfig()
    f1_averaging: str | None = None
    jobs: int = 1


@dataclass(eq=False)
class EvalReport:
    task: TaskSpec
    model_kind: str
    metrics: dict                  # subject-level
    window_metrics: dict
    confusion: ConfusionMatrix | None = None
    window_confusion: ConfusionMatrix | None = None
    pairs: list = field(default_factory=list)  # (prediction, truth) per subject, regression only
    roc: dict = field(default_factory=dict)    # class -> list of (fpr, tpr), window level
    per_fold: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "task": self.task.kind.value,
            "model_kind": self.model_kind,
            "metrics": self.metrics,
            "window_metrics": self.window_metrics,
            "confusion": None if self.confusion is None else self.confusion.counts.tolist(),
            "window_confusion": None if self.window_confusion is None else self.window_confusion.counts.tolist(),
            "pairs": [list(p) for p in self.pairs],
            "roc": {str(k): [list(p) for p in v] for k, v in self.roc.items()},
            "per_fold": self.per_fold,
            "notes": self.notes,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    def roc_csv(self) -> str:
        lines = ["class,fpr,tpr"]
        for k, pts in self.roc.items():
            lines += [f"{k},{a!r},{b!r}" for a, b in pts]
        return "\n".join(lines) + "\n"


def _prepare_fold(m: FeatureMatrix, fold: LosoFold):
    train, test = m.subset(fold.train_rows), m.subset(fold.test_rows)
    means = column_means(train.X)
    train = impute_missing(train, means)
    # the test fold never contributes statistics: its leading gaps take train means
    test = impute_missing(test, means)
    scaler, train_s = clip_and_standardize(train, train)
    return train_s, test.with_X(scaler.transform(test.X))


def _run_fold(m: FeatureMatrix, fold: LosoFold, kind: str, regression: bool, cfg: EvalConfig, seed: int):
    try:
        train, test = _prepare_fold(m, fold)
        if kind == "forest":
            if regression:
                raise ValueError("forest models are classification only; use gbm for regression")
            model = train_random_forest(train, ForestConfig(**{**cfg.forest.__dict__, "seed": seed}))
            return model.predict_proba(test.X), model.n_classes
        model = train_gradient_boosting(train, GbmConfig(**{**cfg.gbm.__dict__, "seed": seed}), regression)
        if regression:
            return model.predict_regression(test.X), 0
        return model.predict_proba(test.X), model.n_classes
    except AuscultError as e:
        raise FoldError(fold.test_patient, e) from e


def _pad(p: np.ndarray, k: int) -> np.ndarray:
    """Fold models that never saw the top classes produce fewer columns."""
    if p.shape[1] == k:
        return p
    out = np.zeros((p.shape[0], k))
    out[:, : p.shape[1]] = p
    return out


def run_task(m: FeatureMatrix, task: TaskSpec, model_kind: str | None = None,
             config: EvalConfig = EvalConfig()) -> EvalReport:
    """LOSO over every patient in ``m``; targets must already be attached for ``task``."""
    if m.targets is None:
        raise ValueError("feature matrix has no targets")
    kind = model_kind or config.model_kind or DEFAULT_MODEL[task.kind]
    if kind not in ("forest", "gbm"):
        raise ValueError(f"unknown model kind {kind!r}")
    regression = task.kind.is_regression
    folds = loso_splits(m)
    seeds = [config.seed + i for i in range(len(folds))]
    args = [(m, f, kind, regression, config, s) for f, s in zip(folds, seeds)]
    if config.jobs == 1:
        results = [_run_fold(*a) for a in args]
    else:
        results = Parallel(n_jobs=config.jobs)(delayed(_run_fold)(*a) for a in args)

    notes = []
    per_fold = []
    if regression:
        win_pred, win_true, pairs = [], [], []
        for fold, seed, (pred, _) in zip(folds, seeds, results):
            truth = float(m.targets[fold.test_rows][0])
            subj = float(pred.mean())
            pairs.append((subj, truth))
            win_pred.append(pred)
            win_true.append(m.targets[fold.test_rows].astype(float))
            per_fold.append({"patient": fold.test_patient, "seed": seed, "n_train": int(fold.train_rows.size),
                             "n_test": int(fold.test_rows.size), "prediction": subj, "truth": truth})
        metrics = regression_metrics(*zip(*pairs))
        wm = regression_metrics(np.concatenate(win_pred), np.concatenate(win_true))
        return EvalReport(task, kind, metrics, wm, pairs=pairs, per_fold=per_fold, notes=notes)

    n_classes = task.n_classes or int(m.targets.max()) + 1
    y_all = m.targets.astype(int)
    subj_true, subj_pred, subj_prob = [], [], []
    win_prob = np.zeros((m.n_rows, n_classes))
    for fold, seed, (prob, _) in zip(folds, seeds, results):
        prob = _pad(prob, n_classes)
        win_prob[fold.test_rows] = prob
        cls, mean = aggregate_subject(prob)
        truth = int(y_all[fold.test_rows][0])
        subj_true.append(truth)
        subj_pred.append(cls)
        subj_prob.append(mean)
        per_fold.append({"patient": fold.test_patient, "seed": seed, "n_train": int(fold.train_rows.size),
                         "n_test": int(fold.test_rows.size), "prediction": cls, "truth": truth})
    subj_prob = np.vstack(subj_prob)
    conf = ConfusionMatrix.from_labels(subj_true, subj_pred, n_classes)
    wconf = ConfusionMatrix.from_labels(y_all, np.argmax(win_prob, axis=1), n_classes)

    def summarize(c, probs, labels):
        out = {"balanced_accuracy": balanced_accuracy(c), "f1": f1_score(c, config.f1_averaging)}
        try:
            out["auc"] = (roc_auc(probs[:, 1], labels == 1) if n_classes == 2
                          else multiclass_auc(probs, labels))
        except OneClassOnly:
            out["auc"] = None
        return out

    metrics = summarize(conf, subj_prob, np.asarray(subj_true))
    wm = summarize(wconf, win_prob, y_all)
    roc = {}
    for k in ([1] if n_classes == 2 else range(n_classes)):
        pos = y_all == k
        if pos.any() and (~pos).any():
            roc[k] = roc_points(win_prob[:, k], pos)
    if config.f1_averaging is None:
        notes.append("f1 averaging: " + ("positive class" if n_classes == 2 else "macro"))
    return EvalReport(task, kind, metrics, wm, conf, wconf, roc=roc, per_fold=per_fold, notes=notes)


def render_report(reports) -> str:
    """Plain-text metrics table with deltas against the published reference values."""
    lines = [f"{'task':<16}{'model':<8}{'metric':<20}{'subject':>10}{'window':>10}{'reference':>11}{'delta':>9}"]
    for r in reports:
        ref = REFERENCE_RESULTS.get(r.task.kind.value, {})
        for name, v in r.metrics.items():
            w = r.window_metrics.get(name)
            rv = ref.get(name)
            cells = [_fmt(v), _fmt(w), _fmt(rv), _fmt(None if v is None or rv is None else v - rv, sign=True)]
            lines.append(f"{r.task.kind.value:<16}{r.model_kind:<8}{name:<20}"
                         f"{cells[0]:>10}{cells[1]:>10}{cells[2]:>11}{cells[3]:>9}")
    return "\n".join(lines) + "\n"


def _fmt(v, sign=False) -> str:
    if v is None:
        return "-"
    return f"{v:+.4f}" if sign else f"{v:.4f}"
