"""Mahalanobis-distance outlier filter with a chi-squared cutoff."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from churnlab.errors import NumericalError
from churnlab.preprocess.chi2 import chi2_quantile
from churnlab.tabular import Frame

log = logging.getLogger(__name__)

# relative eigenvalue floor below which the covariance is treated as singular
_SINGULAR_RTOL = 1e-12


@dataclass
class OutlierStats:
    feature_names: list[str]
    mean_vector: np.ndarray
    covariance: np.ndarray
    alpha: float
    dof: int
    threshold: float
    ridge_added: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")

    def squared_distances(self, X: np.ndarray) -> np.ndarray:
        cov = self.covariance + self.ridge_added * np.eye(len(self.mean_vector))
        try:
            L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise NumericalError("covariance is not positive definite") from None
        z = np.linalg.solve(L, (X - self.mean_vector).T)
        return np.einsum("ij,ij->j", z, z)

    def to_json(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "mean_vector": self.mean_vector.tolist(),
            "covariance": self.covariance.tolist(),
            "alpha": self.alpha,
            "dof": self.dof,
            "threshold": self.threshold,
            "ridge_added": self.ridge_added,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "OutlierStats":
        return cls(
            feature_names=list(doc["feature_names"]),
            mean_vector=np.asarray(doc["mean_vector"], dtype=float),
            covariance=np.asarray(doc["covariance"], dtype=float),
            alpha=float(doc["alpha"]),
            dof=int(doc["dof"]),
            threshold=float(doc["threshold"]),
            ridge_added=float(doc["ridge_added"]),
        )


def fit_outlier_stats(X: np.ndarray, feature_names: Sequence[str], alpha: float) -> OutlierStats:
    n, p = X.shape
    if n <= p:
        raise NumericalError(f"need more rows ({n}) than features ({p}) for a covariance estimate")
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1).reshape(p, p)
    cov = 0.5 * (cov + cov.T)
    ridge = 0.0
    eig = np.linalg.eigvalsh(cov)
    if eig[0] <= _SINGULAR_RTOL * max(eig[-1], 0.0):
        ridge = 1e-8 * float(np.trace(cov)) / p
        log.warning("singular covariance (min eigenvalue %.3g); adding %.3g to the diagonal", eig[0], ridge)
        if ridge <= 0 or np.linalg.eigvalsh(cov + ridge * np.eye(p))[0] <= 0:
            raise NumericalError("covariance remains singular after regularization")
    threshold = chi2_quantile(1.0 - alpha, p)
    return OutlierStats(list(feature_names), mean, cov, alpha, p, threshold, ridge)


def mahalanobis_filter(
    frame: Frame, alpha: float = 0.001, feature_names: Sequence[str] | None = None
) -> tuple[OutlierStats, Frame, np.ndarray, np.ndarray]:
    """Flag rows whose squared Mahalanobis distance exceeds the chi-squared cutoff.

    Returns ``(stats, retained_frame, flagged_row_indices, squared_distances)``.
    Features default to every modeling column (target and identifiers excluded).
    """
    names = list(frame.feature_names if feature_names is None else feature_names)
    X = frame.matrix(names)
    stats = fit_outlier_stats(X, names, alpha)
    d2 = stats.squared_distances(X)
    flagged = np.flatnonzero(d2 > stats.threshold)
    keep = np.flatnonzero(d2 <= stats.threshold)
    return stats, frame.take(keep), flagged, d2
