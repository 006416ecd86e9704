"""Exact path-dependent TreeSHAP, mean-|SHAP| importance and beeswarm export.

The recursion follows the polynomial-time path algorithm of Lundberg et al.
(extend / unwind of the unique feature path, cover ratios as the background).
Every instance visits every node; only the per-instance "one fractions" (0/1,
whether the instance follows a branch) differ, so each path weight is held as
a vector over instances and the whole batch is explained in a single tree walk.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from churnlab.models.tree import BAGGED, Tree, TreeEnsemble


@dataclass
class ShapMatrix:
    phi: np.ndarray  # (n_rows, n_features), raw-margin scale
    base_value: float
    feature_names: list[str]

    @property
    def n_rows(self) -> int:
        return self.phi.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.base_value + self.phi.sum(axis=1)


@dataclass
class GlobalImportance:
    feature_names: list[str]
    values: np.ndarray  # mean |phi| per feature, input order
    ranking: list[int]  # feature indices, most important first

    def ranked(self) -> list[tuple[str, float]]:
        return [(self.feature_names[j], float(self.values[j])) for j in self.ranking]

    def rank_of(self, name: str) -> int:
        """1-based rank of a feature."""
        return self.ranking.index(self.feature_names.index(name)) + 1


# ------------------------------------------------------------- path algebra
# A path is four parallel lists: feature (int), zero fraction (float),
# one fraction (vector over instances, values 0/1), weight (vector).


def _extend(feat, zero, one, w, depth, pz, po, pi, n):
    feat.append(pi)
    zero.append(pz)
    one.append(po)
    w.append(np.ones(n) if depth == 0 else np.zeros(n))
    denom = depth + 1
    for i in range(depth - 1, -1, -1):
        w[i + 1] = w[i + 1] + po * w[i] * ((i + 1) / denom)
        w[i] = pz * w[i] * ((depth - i) / denom)


def _unwind(feat, zero, one, w, depth, k):
    po, pz = one[k], zero[k]
    hot = po != 0
    po_safe = np.where(hot, po, 1.0)
    nxt = w[depth]
    denom = depth + 1
    for i in range(depth - 1, -1, -1):
        old = w[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            from_hot = nxt * denom / ((i + 1) * po_safe)
            from_cold = old * denom / (pz * (depth - i)) if pz != 0 else np.zeros_like(old)
        w[i] = np.where(hot, from_hot, from_cold)
        nxt = np.where(hot, old - w[i] * pz * ((depth - i) / denom), nxt)
    del feat[k], zero[k], one[k]
    w.pop()  # weights stay positional; only feature data shifts


def _unwound_sum(zero, one, w, depth, k):
    po, pz = one[k], zero[k]
    hot = po != 0
    po_safe = np.where(hot, po, 1.0)
    nxt = w[depth]
    total = np.zeros_like(nxt)
    denom = depth + 1
    for i in range(depth - 1, -1, -1):
        tmp = nxt * denom / ((i + 1) * po_safe)
        if pz != 0:
            cold = (w[i] / pz) / ((depth - i) / denom)
        else:
            cold = np.zeros_like(tmp)
        total += np.where(hot, tmp, cold)
        nxt = np.where(hot, w[i] - tmp * pz * ((depth - i) / denom), nxt)
    return total


def _tree_shap(tree: Tree, X: np.ndarray, phi: np.ndarray, scale: float) -> None:
    n = len(X)

    def recurse(node, depth, feat, zero, one, w, pz, po, pi):
        feat, zero, one, w = list(feat), list(zero), list(one), list(w)
        _extend(feat, zero, one, w, depth, pz, po, pi, n)
        if tree.left[node] < 0:
            v = tree.value[node] * scale
            for i in range(1, depth + 1):
                contrib = _unwound_sum(zero, one, w, depth, i) * (one[i] - zero[i]) * v
                phi[:, feat[i]] += contrib
            return
        f = int(tree.feature[node])
        go_left = (X[:, f] <= tree.threshold[node]).astype(float)
        inc_zero, inc_one = 1.0, 1.0
        if f in feat[1:]:
            k = feat.index(f, 1)
            inc_zero, inc_one = zero[k], one[k]
            _unwind(feat, zero, one, w, depth, k)
            depth -= 1
        cover = tree.cover[node]
        lft, rgt = int(tree.left[node]), int(tree.right[node])
        recurse(lft, depth + 1, feat, zero, one, w, tree.cover[lft] / cover * inc_zero, inc_one * go_left, f)
        recurse(rgt, depth + 1, feat, zero, one, w, tree.cover[rgt] / cover * inc_zero, inc_one * (1.0 - go_left), f)

    recurse(0, 0, [], [], [], [], 1.0, np.ones(n), -1)


def expected_value(tree: Tree) -> float:
    """Cover-weighted mean leaf value."""
    leaves = tree.left < 0
    return float(np.sum(tree.value[leaves] * tree.cover[leaves]) / tree.cover[0])


def tree_shap(ensemble: TreeEnsemble, X, threads: int = 1, chunk_size: int = 512) -> ShapMatrix:
    """Exact SHAP values of the raw margin for single trees and boosted ensembles.

    Bagged forests average probabilities, which is not additive in the trees'
    log-odds outputs, so they are rejected: explain the boosted or single
    model instead.
    """
    if ensemble.mode == BAGGED:
        raise ValueError(
            "TreeSHAP on raw margins needs an additive model; use a boosted or single-tree model, not a forest"
        )
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != ensemble.n_features:
        raise ValueError(f"expected {ensemble.n_features} features, got shape {X.shape}")
    phi = np.zeros(X.shape)
    starts = list(range(0, len(X), chunk_size))

    def run(start):
        block = X[start : start + chunk_size]
        out = np.zeros(block.shape)
        for tree in ensemble.trees:
            _tree_shap(tree, block, out, ensemble.learning_rate)
        return start, out

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(s) for s in starts]
    for start, out in results:
        phi[start : start + len(out)] = out
    base = ensemble.base_score + ensemble.learning_rate * sum(expected_value(t) for t in ensemble.trees)
    names = list(ensemble.feature_names) or [f"f{j}" for j in range(X.shape[1])]
    return ShapMatrix(phi, float(base), names)


def global_importance(shap: ShapMatrix) -> GlobalImportance:
    """Mean absolute attribution per feature, ranked descending (ties keep input order)."""
    if shap.n_rows < 1:
        raise ValueError("need at least one instance")
    values = np.abs(shap.phi).mean(axis=0)
    ranking = sorted(range(len(values)), key=lambda j: -values[j])
    return GlobalImportance(list(shap.feature_names), values, ranking)


def beeswarm_export(shap: ShapMatrix, X, importance: GlobalImportance | None = None) -> list[dict]:
    """Long-format rows (feature, instance, shap_value, feature_value,
    normalized_value) with features in importance order. The normalized value
    is min-max scaled per feature, 0.5 for a constant feature."""
    X = np.asarray(X, dtype=float)
    if X.shape != shap.phi.shape:
        raise ValueError(f"feature matrix shape {X.shape} does not match SHAP shape {shap.phi.shape}")
    importance = importance or global_importance(shap)
    rows = []
    for j in importance.ranking:
        col = X[:, j]
        lo, hi = col.min(), col.max()
        norm = np.full(len(col), 0.5) if hi == lo else (col - lo) / (hi - lo)
        name = shap.feature_names[j]
        for i in range(len(col)):
            rows.append(
                {
                    "feature": name,
                    "instance": i,
                    "shap_value": float(shap.phi[i, j]),
                    "feature_value": float(col[i]),
                    "normalized_value": float(norm[i]),
                }
            )
    return rows


def shap_rows(shap: ShapMatrix) -> list[dict]:
    rows = []
    for i in range(shap.n_rows):
        row = {"instance": i}
        row.update({name: float(shap.phi[i, j]) for j, name in enumerate(shap.feature_names)})
        row["base_value"] = shap.base_value
        rows.append(row)
    return rows


def importance_rows(imp: GlobalImportance) -> list[dict]:
    return [
        {"rank": r + 1, "feature": imp.feature_names[j], "mean_abs_shap": float(imp.values[j])}
        for r, j in enumerate(imp.ranking)
    ]


def sign_correlation(shap: ShapMatrix, X, name: str) -> float:
    """Pearson correlation between a feature's values and its attributions."""
    j = shap.feature_names.index(name)
    x, p = np.asarray(X, dtype=float)[:, j], shap.phi[:, j]
    if x.std() == 0 or p.std() == 0:
        return 0.0
    return float(np.corrcoef(x, p)[0, 1])


def mean_attribution(shap: ShapMatrix, X, name: str, where: Sequence[bool] | np.ndarray) -> float:
    j = shap.feature_names.index(name)
    mask = np.asarray(where, dtype=bool)
    return float(shap.phi[mask, j].mean()) if mask.any() else float("nan")
