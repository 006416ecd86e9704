"""L2-penalized logistic regression fitted by iteratively reweighted least squares."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from churnlab.models.numerics import sigmoid


@dataclass
class LinearModel:
    weights: np.ndarray
    intercept: float
    feature_names: list[str] = field(default_factory=list)
    n_iter: int = 0

    @property
    def n_features(self) -> int:
        return len(self.weights)

    def margin(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        return X @ self.weights + self.intercept

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.margin(X))


def logistic_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float) -> float:
    """Negative log-likelihood plus ``l2/2 * |w|^2`` (intercept unpenalized)."""
    m = X @ w + b
    return float(np.sum(np.logaddexp(0.0, m) - y * m) + 0.5 * l2 * (w @ w))


def train_logistic(
    X, y, l2: float = 1.0, max_iter: int = 100, tol: float = 1e-8, feature_names: Sequence[str] = ()
) -> LinearModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be 2-D with one row per label")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be binary 0/1")
    if l2 < 0:
        raise ValueError("l2 must be non-negative")
    y = y.astype(float)
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    pen = np.r_[np.full(d, l2), 0.0]
    beta = np.zeros(d + 1)

    def objective(b):
        return logistic_objective(b[:d], b[d], X, y, l2)

    obj = objective(beta)
    it = 0
    for it in range(1, max_iter + 1):
        p = sigmoid(Xa @ beta)
        grad = Xa.T @ (p - y) + pen * beta
        H = Xa.T @ (Xa * (p * (1.0 - p))[:, None]) + np.diag(pen)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = beta - t * step
            new_obj = objective(cand)
            if new_obj <= obj + 1e-12 * abs(obj) or t < 1e-10:
                break
            t *= 0.5
        delta = np.max(np.abs(cand - beta))
        beta, obj = cand, new_obj
        if delta < tol:
            break
    return LinearModel(beta[:d].copy(), float(beta[d]), list(feature_names), it)
