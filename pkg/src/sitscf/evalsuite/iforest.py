"""Isolation Forest (random axis-aligned isolation trees, height-limited)."""
from __future__ import annotations

import math

import numpy as np

EULER_GAMMA = 0.5772156649


def harmonic(i: float) -> float:
    return math.log(i) + EULER_GAMMA


def c_factor(m: float) -> float:
    """Average path length of an unsuccessful BST search among m points."""
    if m <= 1:
        return 0.0
    return 2.0 * harmonic(m - 1) - 2.0 * (m - 1) / m


class NotFittedError(RuntimeError):
    pass


class _Tree:
    """Flat arrays; ``feature == -1`` marks an external node."""

    __slots__ = ("feature", "threshold", "left", "right", "size", "adjust")

    def __init__(self, feature, threshold, left, right, size):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.size = np.asarray(size, dtype=np.int64)
        self.adjust = np.array([c_factor(s) for s in self.size])

    def path_length(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(len(x), dtype=np.int64)
        depth = np.zeros(len(x))
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            cur = node[active]
            go_left = x[active, self.feature[cur]] < self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            depth[active] += 1
            active = active[self.feature[node[active]] >= 0]
        return depth + self.adjust[node]


def _grow(x: np.ndarray, height_limit: int, rng: np.random.Generator) -> _Tree:
    feature, threshold, left, right, size = [], [], [], [], []

    def new_node(n):
        for arr, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (size, n)):
            arr.append(v)
        return len(feature) - 1

    stack = [(new_node(len(x)), np.arange(len(x)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= height_limit or len(idx) <= 1:
            continue
        sub = x[idx]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        spread = np.flatnonzero(hi > lo)
        if spread.size == 0:  # all rows identical
            continue
        q = int(spread[rng.integers(spread.size)])
        p = float(rng.uniform(lo[q], hi[q]))
        mask = sub[:, q] < p
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = q, p
        left[node] = new_node(len(li))
        right[node] = new_node(len(ri))
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return _Tree(feature, threshold, left, right, size)


class IsolationForest:
    def __init__(self, n_trees: int = 100, sample_size: int = 256, contamination: float = 0.1,
                 seed: int = 0):
        if n_trees < 1 or sample_size < 2:
            raise ValueError("need n_trees >= 1 and sample_size >= 2")
        if not 0.0 <= contamination < 1.0:
            raise ValueError(f"contamination must be in [0, 1), got {contamination}")
        self.n_trees = n_trees
        self.sample_size = sample_size
        self.contamination = contamination
        self.seed = seed
        self.trees: list[_Tree] = []
        self.psi: int | None = None

    @property
    def height_limit(self) -> int:
        return int(math.ceil(math.log2(self.psi if self.psi else self.sample_size)))

    def fit(self, x) -> IsolationForest:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or len(x) == 0:
            raise ValueError("isolation forest needs a non-empty (n, d) array")
        if len(x) < 2:
            raise ValueError("isolation forest needs at least two samples")
        rng = np.random.default_rng(self.seed)
        self.psi = min(self.sample_size, len(x))
        limit = self.height_limit
        self.trees = []
        for _ in range(self.n_trees):
            idx = rng.choice(len(x), size=self.psi, replace=False)
            self.trees.append(_grow(x[idx], limit, rng))
        return self

    def path_lengths(self, x) -> np.ndarray:
        """(n_trees, n) path lengths including the external-node adjustment."""
        if not self.trees:
            raise NotFittedError("isolation forest is not fitted")
        x = np.asarray(x, dtype=np.float64)
        return np.stack([t.path_length(x) for t in self.trees])

    def expected_path_length(self, x) -> np.ndarray:
        return self.path_lengths(x).mean(axis=0)

    def score(self, x) -> np.ndarray:
        """Anomaly score 2^(-E[h(x)] / c(psi)) in (0, 1]; higher is more anomalous."""
        return anomaly_score(self.expected_path_length(x), self.psi)


def anomaly_score(expected_h, psi: int) -> np.ndarray:
    return np.power(2.0, -np.asarray(expected_h, dtype=np.float64) / c_factor(psi))


def iforest_fit(series, n_trees: int = 100, psi: int = 256, seed: int = 0,
                contamination: float = 0.1) -> IsolationForest:
    return IsolationForest(n_trees, psi, contamination, seed).fit(series)


def iforest_score(forest: IsolationForest, series) -> np.ndarray:
    return forest.score(series)
