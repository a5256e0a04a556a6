"""Flat-array binary decision trees and the two split searches that grow them.

Rows go left when ``x[feature] <= threshold``. Candidate thresholds are midpoints
between consecutive distinct values; impurity ties resolve to the lowest feature
index, then the lowest threshold.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ArityMismatch

LEAF = -1


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray    # int, LEAF for leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray      # (n_nodes, n_outputs)

    def __post_init__(self):
        split = self.feature != LEAF
        if split.any() and not np.all(np.isfinite(self.threshold[split])):
            raise ValueError("split thresholds must be finite")

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature == LEAF))

    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):  # children always follow parents
            if self.feature[i] != LEAF:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] != LEAF
        while active.any():
            r, nd = rows[active], node[active]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] != LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "Tree":
        n_out = len(d["value"][0]) if d["value"] else 1
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float).reshape(-1, n_out),
        )


class _Builder:
    def __init__(self, n_out):
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []
        self.n_out = n_out

    def add(self, value) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(np.asarray(value, dtype=float))
        return len(self.feature) - 1

    def split(self, node, f, thr, left, right):
        self.feature[node], self.threshold[node] = f, thr
        self.left[node], self.right[node] = left, right

    def build(self) -> Tree:
        return Tree(np.asarray(self.feature, dtype=np.int64), np.asarray(self.threshold, dtype=float),
                    np.asarray(self.left, dtype=np.int64), np.asarray(self.right, dtype=np.int64),
                    np.asarray(self.value, dtype=float).reshape(-1, self.n_out))


def check_arity(X: np.ndarray, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != n_features:
        raise ArityMismatch(f"model expects {n_features} features, got {X.shape[1]}")
    return X


def _best_gini_split(xs: np.ndarray, counts: np.ndarray):
    """Best split of one feature given values sorted ascending and per-row weighted class counts.

    Returns (child impurity, position) where the split falls after sorted position ``pos``,
    or None when the feature is constant.
    """
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    cl = np.cumsum(counts, axis=0)[:-1]
    tot = cl[-1] + counts[-1]
    cr = tot - cl
    wl, wr = cl.sum(axis=1), cr.sum(axis=1)
    # weighted sum of child Gini impurities: w - sum(c^2)/w per child
    imp = (wl - (cl ** 2).sum(axis=1) / wl) + (wr - (cr ** 2).sum(axis=1) / wr)
    imp = np.where(valid, imp, np.inf)
    pos = int(np.argmin(imp))
    return float(imp[pos]), pos


def grow_classification_tree(X: np.ndarray, y: np.ndarray, weights: np.ndarray, n_classes: int,
                             max_features: int, rng: np.random.Generator,
                             max_depth: int | None = None) -> Tree:
    """Gini tree on rows with positive weight; leaves hold weighted class proportions.

    At each node features are visited in random order until ``max_features``
    non-constant ones have been scored (so constant features never use up the budget).
    """
    n_feat = X.shape[1]
    onehot = np.zeros((y.size, n_classes))
    onehot[np.arange(y.size), y] = 1.0
    wc = onehot * weights[:, None]
    b = _Builder(n_classes)
    stack = [(np.flatnonzero(weights > 0), 0, b.add(np.zeros(n_classes)))]
    while stack:
        rows, depth, node = stack.pop()
        dist = wc[rows].sum(axis=0)
        b.value[node] = dist / dist.sum()
        if np.count_nonzero(dist) <= 1 or rows.size < 2 or (max_depth is not None and depth >= max_depth):
            continue
        best = None  # (impurity, feature, threshold, sorted rows, pos)
        scored = 0
        for f in rng.permutation(n_feat):
            xf = X[rows, f]
            order = np.argsort(xf, kind="stable")
            xs = xf[order]
            res = _best_gini_split(xs, wc[rows[order]])
            if res is None:
                continue
            imp, pos = res
            thr = 0.5 * (xs[pos] + xs[pos + 1])
            if thr == xs[pos + 1]:  # midpoint rounded onto the upper value
                thr = xs[pos]
            cand = (imp, int(f), thr)
            if best is None or cand < best[:3]:
                best = cand + (rows[order], pos)
            scored += 1
            if scored >= max_features:
                break
        if best is None:
            continue
        _, f, thr, srows, pos = best
        go_left = X[rows, f] <= thr
        lnode, rnode = b.add(np.zeros(n_classes)), b.add(np.zeros(n_classes))
        b.split(node, f, thr, lnode, rnode)
        stack.append((rows[~go_left], depth + 1, rnode))
        stack.append((rows[go_left], depth + 1, lnode))
    return b.build()


def presort(X: np.ndarray) -> np.ndarray:
    """Per-feature ascending row order, shape (features, rows)."""
    return np.argsort(X, axis=0, kind="stable").T.copy()


def grow_gradient_tree(X: np.ndarray, order: np.ndarray, g: np.ndarray, h: np.ndarray,
                       max_depth: int, min_child_weight: float, l2_reg: float) -> Tree:
    """Exact greedy second-order regression tree; leaf value = -G/(H + l2_reg).

    ``order`` comes from :func:`presort`; each node keeps its rows in per-feature
    sorted order so no sorting happens while growing.
    """
    n_rows, n_feat = X.shape
    XT = X.T
    b = _Builder(1)
    stack = [(order, 0, b.add([0.0]))]
    while stack:
        sorted_rows, depth, node = stack.pop()
        rows0 = sorted_rows[0]
        G, H = g[rows0].sum(), h[rows0].sum()
        b.value[node] = np.array([-G / (H + l2_reg)])
        m = rows0.size
        if depth >= max_depth or m < 2:
            continue
        xs = np.take_along_axis(XT, sorted_rows, axis=1)
        gl = np.cumsum(g[sorted_rows], axis=1)[:, :-1]
        hl = np.cumsum(h[sorted_rows], axis=1)[:, :-1]
        gr, hr = G - gl, H - hl
        gain = gl ** 2 / (hl + l2_reg) + gr ** 2 / (hr + l2_reg) - G ** 2 / (H + l2_reg)
        ok = (xs[:, 1:] > xs[:, :-1]) & (hl >= min_child_weight) & (hr >= min_child_weight)
        gain = np.where(ok, gain, -np.inf)
        flat = int(np.argmax(gain))  # row-major: lowest feature, then lowest threshold
        f, pos = divmod(flat, m - 1)
        if not gain[f, pos] > 0:
            continue
        thr = 0.5 * (xs[f, pos] + xs[f, pos + 1])
        if thr == xs[f, pos + 1]:
            thr = xs[f, pos]
        go_left = np.zeros(n_rows, dtype=bool)
        go_left[sorted_rows[f, : pos + 1]] = True
        mask = go_left[sorted_rows]
        left_rows = sorted_rows[mask].reshape(n_feat, pos + 1)
        right_rows = sorted_rows[~mask].reshape(n_feat, m - pos - 1)
        lnode, rnode = b.add([0.0]), b.add([0.0])
        b.split(node, f, thr, lnode, rnode)
        stack.append((right_rows, depth + 1, rnode))
        stack.append((left_rows, depth + 1, lnode))
    return b.build()
