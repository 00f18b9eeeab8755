"""SMOTE oversampling and a CART/Gini random forest, numpy only."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


def _as_2d(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row order independent of the input order: by features, then label."""
    keys = [y.astype(str)] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def smote(X, y, k: int = 5, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Oversample every class to the majority count by neighbour interpolation.

    Each synthetic row is ``x + u (x_nn - x)`` with ``u ~ U[0, 1]`` and
    ``x_nn`` one of the ``k`` nearest same-class rows of a random class
    member ``x``. Classes with a single row are duplicated instead.
    Originals come first, then synthetic rows grouped by class.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    X = _as_2d(X)
    y = np.asarray(y)
    if len(X) != len(y):
        raise ValueError("X and y lengths differ")
    if len(y) == 0:
        return X.copy(), y.copy()
    order = _canonical_order(X, y)
    X, y = X[order], y[order]
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(y, return_counts=True)
    target = counts.max()
    new_X, new_y = [X], [y]
    for cls, cnt in zip(classes, counts):
        need = target - cnt
        if need == 0:
            continue
        members = X[y == cls]
        if cnt == 1:
            log.warning("class %r has one sample; duplicating instead of interpolating", cls)
            new_X.append(np.repeat(members, need, axis=0))
            new_y.append(np.full(need, cls, dtype=y.dtype))
            continue
        kk = min(k, cnt - 1)
        d = np.linalg.norm(members[:, None, :] - members[None, :, :], axis=2)
        np.fill_diagonal(d, np.inf)
        nn = np.argsort(d, axis=1, kind="stable")[:, :kk]
        base = rng.integers(0, cnt, size=need)
        pick = nn[base, rng.integers(0, kk, size=need)]
        u = rng.random((need, 1))
        new_X.append(members[base] + u * (members[pick] - members[base]))
        new_y.append(np.full(need, cls, dtype=y.dtype))
    return np.vstack(new_X), np.concatenate(new_y)


@dataclass
class _Node:
    proba: np.ndarray
    feature: int = -1
    threshold: float = 0.0
    left: _Node | None = None
    right: _Node | None = None

    @property
    def leaf(self) -> bool:
        return self.left is None


def _gini_split(x: np.ndarray, yi: np.ndarray, n_classes: int) -> tuple[float, float]:
    """Best threshold on one feature: returns (weighted child gini, threshold)."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], yi[order]
    onehot = np.zeros((len(ys), n_classes))
    onehot[np.arange(len(ys)), ys] = 1.0
    left = np.cumsum(onehot, axis=0)[:-1]
    total = left[-1] + onehot[-1]
    right = total - left
    nl = np.arange(1, len(ys))
    nr = len(ys) - nl
    gl = 1.0 - np.sum(left ** 2, axis=1) / nl ** 2
    gr = 1.0 - np.sum(right ** 2, axis=1) / nr ** 2
    score = (nl * gl + nr * gr) / len(ys)
    valid = xs[1:] > xs[:-1]
    if not np.any(valid):
        return np.inf, 0.0
    score = np.where(valid, score, np.inf)
    i = int(np.argmin(score))
    return float(score[i]), float((xs[i] + xs[i + 1]) / 2)


@dataclass
class DecisionTree:
    """CART classifier with Gini impurity and unlimited depth by default."""

    n_classes: int
    max_depth: int | None = None
    min_samples_split: int = 2
    root: _Node | None = None

    def fit(self, X: np.ndarray, yi: np.ndarray) -> DecisionTree:
        self.root = self._grow(_as_2d(X), np.asarray(yi, dtype=int), 0)
        return self

    def _grow(self, X, yi, depth) -> _Node:
        counts = np.bincount(yi, minlength=self.n_classes).astype(float)
        node = _Node(proba=counts / counts.sum())
        if (counts > 0).sum() <= 1 or len(yi) < self.min_samples_split:
            return node
        if self.max_depth is not None and depth >= self.max_depth:
            return node
        parent = 1.0 - np.sum(node.proba ** 2)
        best = (parent - 1e-12, -1, 0.0)
        for j in range(X.shape[1]):
            score, thr = _gini_split(X[:, j], yi, self.n_classes)
            if score < best[0]:
                best = (score, j, thr)
        _, j, thr = best
        if j < 0:
            return node
        mask = X[:, j] <= thr
        node.feature, node.threshold = j, thr
        node.left = self._grow(X[mask], yi[mask], depth + 1)
        node.right = self._grow(X[~mask], yi[~mask], depth + 1)
        return node

    def predict_proba(self, X) -> np.ndarray:
        X = _as_2d(X)
        out = np.empty((len(X), self.n_classes))
        for i, row in enumerate(X):
            node = self.root
            while not node.leaf:
                node = node.left if row[node.feature] <= node.threshold else node.right
            out[i] = node.proba
        return out


@dataclass
class RandomForest:
    n_trees: int = 100
    seed: int = 0
    max_depth: int | None = None
    classes: np.ndarray = field(default_factory=lambda: np.array([]))
    trees: list[DecisionTree] = field(default_factory=list)
    X_train: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    y_train: np.ndarray = field(default_factory=lambda: np.array([]))

    def fit(self, X, y) -> RandomForest:
        X = _as_2d(X)
        y = np.asarray(y)
        if len(y) == 0:
            raise ValueError("empty training set")
        order = _canonical_order(X, y)
        X, y = X[order], y[order]
        self.classes, yi = np.unique(y, return_inverse=True)
        self.X_train, self.y_train = X, y
        rng = np.random.default_rng(self.seed)
        n = len(y)
        self.trees = []
        for _ in range(self.n_trees):
            idx = np.sort(rng.integers(0, n, size=n))
            tree = DecisionTree(len(self.classes), max_depth=self.max_depth)
            self.trees.append(tree.fit(X[idx], yi[idx]))
        return self

    def predict_proba(self, X) -> np.ndarray:
        return np.mean([t.predict_proba(X) for t in self.trees], axis=0)

    def predict(self, X, allowed=None) -> np.ndarray:
        """Most probable class; ``allowed`` masks the rest and renormalizes.

        When every allowed class has zero probability the class of the
        nearest allowed training sample is returned, or the first entry of
        ``allowed`` if the forest never saw any of them.
        """
        X = _as_2d(X)
        proba = self.predict_proba(X)
        if allowed is None:
            return self.classes[np.argmax(proba, axis=1)]
        allowed = list(allowed)
        mask = np.isin(self.classes, allowed)
        proba = np.where(mask, proba, 0.0)
        pool = np.isin(self.y_train, allowed)
        out = []
        for x, row in zip(X, proba):
            if row.sum() > 0:
                out.append(self.classes[int(np.argmax(row))])
            elif pool.any():
                d = np.linalg.norm(self.X_train[pool] - x, axis=1)
                out.append(self.y_train[pool][int(np.argmin(d))])
            else:
                out.append(allowed[0])
        return np.array(out, dtype=object)
