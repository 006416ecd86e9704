"""Binary trees, tree ensembles, and the exact greedy grower shared by CART,
random forest and Newton boosting.

Split search works on per-node histograms over every distinct training value
of each feature, so it is exact (equivalent to scanning sorted values) while
costing one ``bincount`` per node. A split sends ``x <= threshold`` left; the
threshold is the midpoint between the largest left value and the smallest
right value present in the node.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from churnlab.models.numerics import logit, sigmoid

SINGLE = "single"
BAGGED = "bagged-vote-average"
BOOSTED = "boosted-sum"
MODES = (SINGLE, BAGGED, BOOSTED)

_MIN_GAIN = 1e-12


@dataclass
class Hyperparams:
    max_depth: int = 6
    min_child_weight: float = 1.0
    n_rounds: int = 200  # boosting rounds, or trees in a forest
    learning_rate: float = 0.3
    reg_lambda: float = 1.0
    gamma: float = 0.0
    subsample: float = 1.0
    colsample: float | None = None  # None: all features (boosting) or ceil(sqrt(d)) per split (forest)
    bootstrap: bool = True  # forest only
    l2: float = 1.0  # logistic regression only
    seed: int = 0

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be >= 1")
        if self.min_child_weight < 0 or self.reg_lambda < 0 or self.gamma < 0 or self.l2 < 0:
            raise ValueError("penalties and min_child_weight must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must lie in (0, 1]")
        if self.colsample is not None and not 0.0 < self.colsample <= 1.0:
            raise ValueError("colsample must lie in (0, 1]")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TreeNode:
    index: int
    feature_index: int  # -1 at leaves
    threshold: float
    left: int  # -1 at leaves
    right: int
    leaf_value: float
    cover: float
    node_sample_count: float

    @property
    def is_leaf(self) -> bool:
        return self.left < 0


@dataclass
class Tree:
    """Flat node arrays; node 0 is the root, nodes stored in preorder."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray
    count: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def node(self, i: int) -> TreeNode:
        return TreeNode(
            i,
            int(self.feature[i]),
            float(self.threshold[i]),
            int(self.left[i]),
            int(self.right[i]),
            float(self.value[i]),
            float(self.cover[i]),
            float(self.count[i]),
        )

    def nodes(self) -> list[TreeNode]:
        return [self.node(i) for i in range(self.n_nodes)]

    @property
    def depth(self) -> int:
        def walk(i):
            if self.left[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.left[node] >= 0
        while active.any():
            r, nd = rows[active], node[active]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.left[node] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def validate(self) -> None:
        internal = self.left >= 0
        if np.any(internal != (self.right >= 0)):
            raise ValueError("internal nodes need both children")
        if not np.all(np.isfinite(self.value[~internal])):
            raise ValueError("leaf values must be finite")
        if np.any(self.cover <= 0):
            raise ValueError("node cover must be positive")

    def to_json(self) -> dict:
        return {
            "nodes": [
                {
                    "feature_index": int(self.feature[i]),
                    "threshold": float(self.threshold[i]),
                    "left": int(self.left[i]),
                    "right": int(self.right[i]),
                    "leaf_value": float(self.value[i]),
                    "cover": float(self.cover[i]),
                    "node_sample_count": float(self.count[i]),
                }
                for i in range(self.n_nodes)
            ]
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Tree":
        nodes = doc["nodes"]
        tree = cls(
            feature=np.array([n["feature_index"] for n in nodes], dtype=np.int64),
            threshold=np.array([n["threshold"] for n in nodes], dtype=float),
            left=np.array([n["left"] for n in nodes], dtype=np.int64),
            right=np.array([n["right"] for n in nodes], dtype=np.int64),
            value=np.array([n["leaf_value"] for n in nodes], dtype=float),
            cover=np.array([n["cover"] for n in nodes], dtype=float),
            count=np.array([n["node_sample_count"] for n in nodes], dtype=float),
        )
        tree.validate()
        return tree

    @classmethod
    def leaf(cls, value: float, cover: float = 1.0, count: float = 1.0) -> "Tree":
        return cls(
            np.array([-1]),
            np.array([0.0]),
            np.array([-1]),
            np.array([-1]),
            np.array([float(value)]),
            np.array([float(cover)]),
            np.array([float(count)]),
        )


@dataclass
class TreeEnsemble:
    trees: list[Tree]
    mode: str
    base_score: float = 0.0
    learning_rate: float = 1.0
    n_features: int = 0
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.trees:
            raise ValueError("ensemble needs at least one tree")
        if self.mode not in MODES:
            raise ValueError(f"unknown ensemble mode {self.mode!r}")

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        return X

    def margin(self, X: np.ndarray) -> np.ndarray:
        """Raw log-odds. For bagged forests this is the logit of the averaged probability."""
        X = self._check(X)
        if self.mode == BAGGED:
            return logit(self.predict_proba(X))
        total = np.zeros(len(X))
        for t in self.trees:
            total += t.predict(X)
        return self.base_score + self.learning_rate * total

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = self._check(X)
        if self.mode == BAGGED:
            return np.mean([sigmoid(t.predict(X)) for t in self.trees], axis=0)
        return sigmoid(self.margin(X))


# ---------------------------------------------------------------- growing


class BinnedMatrix:
    """Feature matrix recoded as indices into each column's sorted distinct values.

    Bins of all features live in one concatenated index space; feature ``j``
    owns ``[offsets[j], offsets[j] + n_bins[j])``.
    """

    def __init__(self, X: np.ndarray):
        X = np.asarray(X, dtype=float)
        self.n, self.d = X.shape
        self.uniques = [np.unique(X[:, j]) for j in range(self.d)]
        self.n_bins = np.array([len(u) for u in self.uniques], dtype=np.int64)
        self.offsets = np.r_[0, np.cumsum(self.n_bins)[:-1]].astype(np.int64)
        self.total_bins = int(self.n_bins.sum())
        self.bin_feature = np.repeat(np.arange(self.d), self.n_bins)
        self.bin_value = np.concatenate(self.uniques) if self.d else np.zeros(0)
        codes = np.empty((self.n, self.d), dtype=np.int64)
        for j, u in enumerate(self.uniques):
            codes[:, j] = np.searchsorted(u, X[:, j])
        self.codes = codes
        self.flat = codes + self.offsets

    def occupied_histograms(self, rows: np.ndarray, stats: Sequence[np.ndarray], features: np.ndarray | None = None):
        """Per-bin sums of ``stats`` over ``rows``, restricted to occupied bins
        of ``features`` (ascending indices; all features when None).

        Returns ``(bins, sums)``: ascending global bin ids (so grouped by
        feature, then value) and one array of sums per stat.
        """
        if features is None:
            idx = self.flat[rows].ravel()
            k = self.d
        else:
            idx = self.flat[np.ix_(rows, features)].ravel()
            k = len(features)
        if len(idx) < self.total_bins:
            bins, inverse = np.unique(idx, return_inverse=True)
            sums = [np.bincount(inverse, weights=np.repeat(s[rows], k), minlength=len(bins)) for s in stats]
            return bins, sums
        hist = [np.bincount(idx, weights=np.repeat(s[rows], k), minlength=self.total_bins) for s in stats]
        present = np.bincount(idx, minlength=self.total_bins) > 0
        bins = np.flatnonzero(present)
        return bins, [h[bins] for h in hist]


class GiniCriterion:
    """Stats per row: (weight, weight * y). Gain is the weighted Gini decrease."""

    n_stats = 2

    def __init__(self, weights: np.ndarray, y: np.ndarray, min_child_weight: float):
        self.stats = [weights, weights * y]
        self.min_child_weight = min_child_weight

    @staticmethod
    def _impurity(w, p):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(w > 0, 2.0 * p * (w - p) / w, 0.0)

    def gain(self, left, total):
        (wl, pl), (w, p) = left, total
        wr, pr = w - wl, p - pl
        g = self._impurity(w, p) - self._impurity(wl, pl) - self._impurity(wr, pr)
        ok = (wl >= self.min_child_weight) & (wr >= self.min_child_weight)
        return np.where(ok, g, -np.inf)

    def leaf(self, total) -> tuple[float, float]:
        w, p = total
        return float(logit(p / w)), float(w)

    @staticmethod
    def is_pure(total) -> bool:
        w, p = total
        return p <= 0.0 or p >= w


class NewtonCriterion:
    """Stats per row: (gradient, hessian) of the logistic loss."""

    n_stats = 2

    def __init__(self, grad: np.ndarray, hess: np.ndarray, reg_lambda: float, gamma: float, min_child_weight: float):
        self.stats = [grad, hess]
        self.reg_lambda = reg_lambda
        self.gamma = gamma
        self.min_child_weight = min_child_weight

    def _score(self, g, h):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(h + self.reg_lambda > 0, g * g / (h + self.reg_lambda), 0.0)

    def gain(self, left, total):
        (gl, hl), (g, h) = left, total
        gr, hr = g - gl, h - hl
        out = 0.5 * (self._score(gl, hl) + self._score(gr, hr) - self._score(g, h)) - self.gamma
        ok = (hl >= self.min_child_weight) & (hr >= self.min_child_weight)
        return np.where(ok, out, -np.inf)

    def leaf(self, total) -> tuple[float, float]:
        g, h = total
        denom = h + self.reg_lambda
        return (float(-g / denom) if denom > 0 else 0.0), float(h)

    @staticmethod
    def is_pure(total) -> bool:
        return False


def grow_tree(
    binned: BinnedMatrix,
    rows: np.ndarray,
    criterion,
    counts: np.ndarray,
    max_depth: int,
    feature_sampler: Callable[[], np.ndarray | None] | None = None,
) -> Tree:
    """Greedy depth-first growth.

    ``counts`` holds per-row sample weights (bootstrap multiplicities, or ones)
    and gives ``node_sample_count``. ``feature_sampler`` returns a boolean mask
    of features allowed at a split. Ties go to the lowest feature index, then
    the lowest threshold.
    """
    feature, threshold, left, right, value, cover, count = [], [], [], [], [], [], []

    def add_node(f, thr, v, c, cnt):
        feature.append(f)
        threshold.append(thr)
        left.append(-1)
        right.append(-1)
        value.append(v)
        cover.append(c)
        count.append(cnt)
        return len(feature) - 1

    def build(node_rows, depth):
        totals = tuple(float(s[node_rows].sum()) for s in criterion.stats)
        cnt = float(counts[node_rows].sum())
        v, c = criterion.leaf(totals)
        if depth >= max_depth or len(node_rows) < 2 or criterion.is_pure(totals):
            return add_node(-1, 0.0, v, c, cnt)
        allowed = feature_sampler() if feature_sampler is not None else None
        subset = None if allowed is None or allowed.all() else np.flatnonzero(allowed)
        bins, sums = binned.occupied_histograms(node_rows, criterion.stats, subset)
        feat = binned.bin_feature[bins]
        # a feature's last occupied bin cannot split (empty right side)
        splittable = np.r_[feat[1:] == feat[:-1], False]
        seg_start = np.r_[True, feat[1:] != feat[:-1]]
        start_idx = np.maximum.accumulate(np.where(seg_start, np.arange(len(feat)), 0))
        left_sums = [_segmented_cumsum(s, start_idx) for s in sums]
        gain = criterion.gain(tuple(left_sums), totals)
        gain = np.where(splittable, gain, -np.inf)
        best = int(np.argmax(gain)) if len(gain) else 0
        if not len(gain) or not gain[best] > _MIN_GAIN:
            return add_node(-1, 0.0, v, c, cnt)
        f = int(feat[best])
        lo, hi = binned.bin_value[bins[best]], binned.bin_value[bins[best + 1]]
        thr = 0.5 * (lo + hi)
        if not lo <= thr < hi:
            thr = lo
        go_left = binned.flat[node_rows, f] <= bins[best]
        i = add_node(f, float(thr), v, c, cnt)
        left[i] = build(node_rows[go_left], depth + 1)
        right[i] = build(node_rows[~go_left], depth + 1)
        return i

    build(np.asarray(rows, dtype=np.int64), 0)
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=float),
        np.array(cover, dtype=float),
        np.array(count, dtype=float),
    )


def _segmented_cumsum(s: np.ndarray, start_idx: np.ndarray) -> np.ndarray:
    """Cumulative sum restarting at each segment; ``start_idx[i]`` is the first
    position of the segment holding ``i``. Exact for integer-valued sums."""
    cum = np.cumsum(s)
    before = np.empty_like(cum)
    before[0] = 0.0
    before[1:] = cum[:-1]
    return cum - before[start_idx]


def _check_xy(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be 2-D with one row per label")
    if len(X) == 0:
        raise ValueError("empty training set")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be binary 0/1")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains missing or non-finite values")
    return X, y.astype(float)


def _n_features_per_split(d: int, colsample: float | None) -> int:
    if colsample is None:
        return max(1, math.ceil(math.sqrt(d)))
    return max(1, math.ceil(colsample * d))


def _cart_tree(binned, y, weights, hp: Hyperparams, rng: np.random.Generator | None, k_features: int | None):
    rows = np.flatnonzero(weights > 0)
    crit = GiniCriterion(weights, y, hp.min_child_weight)
    sampler = None
    if k_features is not None and k_features < binned.d:

        def sampler():
            mask = np.zeros(binned.d, dtype=bool)
            mask[rng.choice(binned.d, size=k_features, replace=False)] = True
            return mask

    return grow_tree(binned, rows, crit, weights, hp.max_depth, sampler)


def train_cart(X, y, hp: Hyperparams | None = None, feature_names: Sequence[str] = ()) -> TreeEnsemble:
    """Single CART tree on Gini impurity; leaves hold the log-odds of the positive fraction."""
    hp = hp or Hyperparams()
    X, y = _check_xy(X, y)
    binned = BinnedMatrix(X)
    tree = _cart_tree(binned, y, np.ones(len(y)), hp, None, None)
    return TreeEnsemble([tree], SINGLE, 0.0, 1.0, X.shape[1], list(feature_names))


def train_forest(
    X, y, hp: Hyperparams | None = None, feature_names: Sequence[str] = (), threads: int = 1
) -> TreeEnsemble:
    """Bagged CART trees with per-split feature subsampling.

    Each tree draws from its own generator spawned from ``hp.seed``, so the
    ensemble does not depend on ``threads``.
    """
    hp = hp or Hyperparams()
    X, y = _check_xy(X, y)
    n, d = X.shape
    binned = BinnedMatrix(X)
    k = _n_features_per_split(d, hp.colsample)
    seeds = np.random.SeedSequence(hp.seed).spawn(hp.n_rounds)

    def one(seq):
        rng = np.random.default_rng(seq)
        if hp.bootstrap:
            m = max(1, int(round(hp.subsample * n)))
            weights = np.bincount(rng.integers(0, n, size=m), minlength=n).astype(float)
        elif hp.subsample < 1.0:
            m = max(1, int(round(hp.subsample * n)))
            weights = np.zeros(n)
            weights[rng.choice(n, size=m, replace=False)] = 1.0
        else:
            weights = np.ones(n)
        return _cart_tree(binned, y, weights, hp, rng, k)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(one, seeds))
    else:
        trees = [one(s) for s in seeds]
    return TreeEnsemble(trees, BAGGED, 0.0, 1.0, d, list(feature_names))


def train_boosted(X, y, hp: Hyperparams | None = None, feature_names: Sequence[str] = ()) -> TreeEnsemble:
    """Newton boosting on the logistic loss (second-order, L2-penalized leaves)."""
    hp = hp or Hyperparams()
    X, y = _check_xy(X, y)
    n, d = X.shape
    binned = BinnedMatrix(X)
    rng = np.random.default_rng(hp.seed)
    base = float(logit(y.mean()))
    margin = np.full(n, base)
    ones = np.ones(n)
    colsample = 1.0 if hp.colsample is None else hp.colsample
    trees = []
    for _ in range(hp.n_rounds):
        p = sigmoid(margin)
        grad, hess = p - y, p * (1.0 - p)
        if hp.subsample < 1.0:
            rows = np.sort(rng.choice(n, size=max(1, math.ceil(hp.subsample * n)), replace=False))
        else:
            rows = np.arange(n)
        sampler = None
        if colsample < 1.0:
            mask = np.zeros(d, dtype=bool)
            mask[rng.choice(d, size=max(1, math.ceil(colsample * d)), replace=False)] = True
            sampler = lambda mask=mask: mask  # noqa: E731
        crit = NewtonCriterion(grad, hess, hp.reg_lambda, hp.gamma, hp.min_child_weight)
        tree = grow_tree(binned, rows, crit, ones, hp.max_depth, sampler)
        if np.any(tree.cover <= 0):
            # hessians underflowed (saturated predictions); fall back to sample counts
            tree.cover = np.maximum(tree.cover, tree.count * np.finfo(float).tiny)
        trees.append(tree)
        margin += hp.learning_rate * tree.predict(X)
    return TreeEnsemble(trees, BOOSTED, base, hp.learning_rate, d, list(feature_names))
