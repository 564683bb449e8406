"""CART regression trees with a cross-validated depth search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_DEPTH = 5


@dataclass
class Node:
    value: float
    feature: int = -1
    threshold: float = 0.0
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def predict_one(self, x) -> float:
        node = self
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.value

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([self.predict_one(row) for row in X])

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"value": self.value}
        return {"feature": self.feature, "threshold": self.threshold,
                "left": self.left.to_dict(), "right": self.right.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Node":
        if "value" in d:
            return cls(float(d["value"]))
        return cls(0.0, int(d["feature"]), float(d["threshold"]),
                   cls.from_dict(d["left"]), cls.from_dict(d["right"]))


def _best_split(X: np.ndarray, y: np.ndarray):
    """Split maximising the reduction of squared error; None when nothing helps."""
    n = y.size
    total = y.sum()
    parent_sse = float(np.sum((y - total / n) ** 2))
    best = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs, ys = X[order, j], y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys ** 2)
        # candidate cut after position i where the feature value changes
        cuts = np.flatnonzero(xs[1:] > xs[:-1])
        if cuts.size == 0:
            continue
        nl = cuts + 1.0
        nr = n - nl
        sl, sr = csum[cuts], total - csum[cuts]
        ql, qr = csq[cuts], csq[-1] - csq[cuts]
        sse = (ql - sl ** 2 / nl) + (qr - sr ** 2 / nr)
        i = int(np.argmin(sse))
        gain = parent_sse - float(sse[i])
        if gain > 1e-12 and (best is None or gain > best[0] + 1e-12):
            best = (gain, j, float((xs[cuts[i]] + xs[cuts[i] + 1]) / 2.0))
    return best


def fit_regression_tree(X, y, max_depth: int) -> Node:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)

    def grow(idx: np.ndarray, depth: int) -> Node:
        node = Node(float(y[idx].mean()))
        if depth >= max_depth or idx.size < 2 or np.ptp(y[idx]) == 0:
            return node
        split = _best_split(X[idx], y[idx])
        if split is None:
            return node
        _, j, thr = split
        go_left = X[idx, j] <= thr
        node.feature, node.threshold = j, thr
        node.left = grow(idx[go_left], depth + 1)
        node.right = grow(idx[~go_left], depth + 1)
        return node

    return grow(np.arange(y.size), 0)


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    return [fold for fold in np.array_split(perm, k) if fold.size]


def select_depth(X, y, seed: int, depths=range(1, MAX_DEPTH + 1)) -> tuple[int, dict]:
    """Grid search over depth by k-fold CV (k = min(5, N)), scored by negative MSE.

    Ties go to the shallower tree.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    k = min(5, n)
    scores = {}
    if k < 2:
        return min(depths), scores
    folds = kfold_indices(n, k, seed)
    for d in depths:
        fold_scores = []
        for test in folds:
            train = np.setdiff1d(np.arange(n), test)
            tree = fit_regression_tree(X[train], y[train], d)
            fold_scores.append(-float(np.mean((tree.predict(X[test]) - y[test]) ** 2)))
        scores[d] = float(np.mean(fold_scores))
    best = min(depths)
    for d in depths:
        if scores[d] > scores[best] + 1e-12:
            best = d
    return best, scores
