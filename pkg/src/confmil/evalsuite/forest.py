"""Random forest of CART trees over binary fingerprints."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError, ShapeError


@dataclass(frozen=True)
class RFConfig:
    trees: int = 100
    max_features: int | None = None  # None -> floor(sqrt(n_features))
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.trees < 1:
            raise DomainError("a forest needs at least one tree")
        if self.max_features is not None and self.max_features < 1:
            raise DomainError("max_features must be positive")


@dataclass
class Tree:
    # node i: feature[i] < 0 marks a leaf; otherwise samples with bit 0 go to left[i]
    feature: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # positive fraction of the training samples that reached the node

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            f = self.feature[node[idx]]
            bit = X[idx, f] != 0
            node[idx] = np.where(bit, self.right[node[idx]], self.left[node[idx]])
            active = self.feature[node] >= 0
        return self.value[node]


@dataclass
class Forest:
    trees: list
    n_features: int

    def predict(self, X) -> np.ndarray:
        X = _as_bits(X)
        if X.shape[1] != self.n_features:
            raise ShapeError(f"forest expects {self.n_features} bits, got {X.shape[1]}")
        total = np.zeros(X.shape[0])
        for t in self.trees:
            total += t.predict(X)
        return total / len(self.trees)


def _as_bits(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X))
    if X.ndim != 2:
        raise ShapeError("fingerprints must form a 2-D array")
    if not np.all((X == 0) | (X == 1)):
        raise DomainError("fingerprints must be 0/1 bits")
    return X.astype(np.uint8)


def _best_split(X, y, rng, max_features):
    """Gini-optimal feature among random candidates, or -1 if nothing splits.

    Candidates are drawn in chunks of ``max_features`` from a random
    permutation; if no candidate in a chunk separates the node the next
    chunk is tried, so constant features never end the growth early.
    """
    n = y.size
    order = rng.permutation(X.shape[1])
    for start in range(0, order.size, max_features):
        cand = order[start:start + max_features]
        ones = X[:, cand].astype(np.int64)
        n1 = ones.sum(axis=0)
        ok = (n1 > 0) & (n1 < n)
        if not ok.any():
            continue
        p1 = ones.T @ y
        n0 = n - n1
        p0 = y.sum() - p1
        with np.errstate(divide="ignore", invalid="ignore"):
            g1 = np.where(n1 > 0, n1 - (p1 * p1 + (n1 - p1) ** 2) / np.maximum(n1, 1), 0.0)
            g0 = np.where(n0 > 0, n0 - (p0 * p0 + (n0 - p0) ** 2) / np.maximum(n0, 1), 0.0)
        # n * weighted child impurity; the first minimum in candidate order wins
        score = np.where(ok, g1 + g0, np.inf)
        return int(cand[int(np.argmin(score))])
    return -1


def grow_tree(X: np.ndarray, y: np.ndarray, rng: np.random.Generator, max_features: int) -> Tree:
    """CART grown until every leaf is pure or its samples are indistinguishable."""
    feature, left, right, value = [], [], [], []
    stack = [(np.arange(y.size), None, False)]
    while stack:
        idx, parent, is_right = stack.pop()
        node = len(feature)
        if parent is not None:
            (right if is_right else left)[parent] = node
        yy = y[idx]
        pos = yy.sum()
        feature.append(-1)
        left.append(-1)
        right.append(-1)
        value.append(pos / yy.size)
        if pos == 0 or pos == yy.size:
            continue
        f = _best_split(X[idx], yy, rng, max_features)
        if f < 0:
            continue
        feature[node] = f
        bit = X[idx, f] != 0
        # push right first so the left subtree gets the lower node ids
        stack.append((idx[bit], node, True))
        stack.append((idx[~bit], node, False))
    return Tree(np.array(feature), np.array(left), np.array(right), np.array(value, dtype=np.float64))


def rf_train(fingerprints, labels, config: RFConfig = RFConfig()) -> Forest:
    X = _as_bits(fingerprints)
    y = np.asarray(labels)
    if X.shape[0] == 0:
        raise DomainError("empty training set")
    if y.shape != (X.shape[0],) or not np.all((y == 0) | (y == 1)):
        raise DomainError("labels must be one 0/1 value per fingerprint")
    y = y.astype(np.int64)
    mf = config.max_features or max(1, math.isqrt(X.shape[1]))
    mf = min(mf, X.shape[1])
    trees = []
    for child in np.random.SeedSequence(config.seed).spawn(config.trees):
        rng = np.random.default_rng(child)
        if config.bootstrap:
            rows = rng.integers(0, X.shape[0], size=X.shape[0])
        else:
            rows = np.arange(X.shape[0])
        trees.append(grow_tree(X[rows], y[rows], rng, mf))
    return Forest(trees, X.shape[1])


def rf_predict(forest: Forest, fingerprint) -> np.ndarray | float:
    """Mean over trees of the leaf positive fraction; a scalar for one fingerprint."""
    fp = np.asarray(fingerprint)
    out = forest.predict(fp)
    return float(out[0]) if fp.ndim == 1 else out
