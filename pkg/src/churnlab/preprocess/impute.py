"""Median and iterative (chained ridge regression) imputation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from churnlab.errors import SchemaError, UnfitError
from churnlab.tabular import Frame

log = logging.getLogger(__name__)

DEFAULT_MAX_ROUNDS = 10
DEFAULT_TOLERANCE = 1e-3
DEFAULT_RIDGE = 1e-3


@dataclass
class RidgeFit:
    """Ridge regression on internally standardized predictors.

    The intercept is unpenalized (fit on centred targets).
    """

    features: list[str]
    means: np.ndarray
    scales: np.ndarray
    weights: np.ndarray
    intercept: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.intercept + ((X - self.means) / self.scales) @ self.weights

    def to_json(self) -> dict:
        return {
            "features": list(self.features),
            "means": self.means.tolist(),
            "scales": self.scales.tolist(),
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RidgeFit":
        return cls(
            features=list(doc["features"]),
            means=np.asarray(doc["means"], dtype=float),
            scales=np.asarray(doc["scales"], dtype=float),
            weights=np.asarray(doc["weights"], dtype=float),
            intercept=float(doc["intercept"]),
        )


def fit_ridge(X: np.ndarray, y: np.ndarray, features: Sequence[str], penalty: float) -> RidgeFit:
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    scales[scales == 0] = 1.0
    Z = (X - means) / scales
    ybar = float(y.mean())
    A = Z.T @ Z + penalty * np.eye(Z.shape[1])
    w = np.linalg.solve(A, Z.T @ (y - ybar))
    if not np.all(np.isfinite(w)):
        raise np.linalg.LinAlgError("non-finite ridge solution")
    return RidgeFit(list(features), means, scales, w, ybar)


@dataclass
class ImputationPlan:
    median_columns: list[str]
    iterative_columns: list[str]
    max_rounds: int = DEFAULT_MAX_ROUNDS
    tolerance: float = DEFAULT_TOLERANCE
    ridge: float = DEFAULT_RIDGE
    # medians for every planned column; iterative columns use them as the starting fill
    fitted_medians: dict[str, float] = field(default_factory=dict)
    # None marks a column that fell back to its median
    fitted_regressors: dict[str, RidgeFit | None] = field(default_factory=dict)
    order: list[str] = field(default_factory=list)
    # observed [min, max] per iterative column; regression fills are clipped to it
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    rounds_run: int = 0
    converged: bool = False
    change_history: list[float] = field(default_factory=list)  # max relative change per round

    def __post_init__(self):
        overlap = set(self.median_columns) & set(self.iterative_columns)
        if overlap:
            raise ValueError(f"columns in both median and iterative lists: {sorted(overlap)}")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")

    def to_json(self) -> dict:
        return {
            "median_columns": list(self.median_columns),
            "iterative_columns": list(self.iterative_columns),
            "max_rounds": self.max_rounds,
            "tolerance": self.tolerance,
            "ridge": self.ridge,
            "fitted_medians": dict(self.fitted_medians),
            "fitted_regressors": {
                k: (None if v is None else v.to_json()) for k, v in self.fitted_regressors.items()
            },
            "order": list(self.order),
            "bounds": {k: list(v) for k, v in self.bounds.items()},
            "rounds_run": self.rounds_run,
            "converged": self.converged,
            "change_history": list(self.change_history),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ImputationPlan":
        return cls(
            median_columns=list(doc["median_columns"]),
            iterative_columns=list(doc["iterative_columns"]),
            max_rounds=int(doc["max_rounds"]),
            tolerance=float(doc["tolerance"]),
            ridge=float(doc["ridge"]),
            fitted_medians={k: float(v) for k, v in doc["fitted_medians"].items()},
            fitted_regressors={
                k: (None if v is None else RidgeFit.from_json(v))
                for k, v in doc["fitted_regressors"].items()
            },
            order=list(doc["order"]),
            bounds={k: (float(v[0]), float(v[1])) for k, v in doc.get("bounds", {}).items()},
            rounds_run=int(doc["rounds_run"]),
            converged=bool(doc["converged"]),
            change_history=[float(v) for v in doc.get("change_history", [])],
        )


def _check_columns(frame: Frame, names: Sequence[str]) -> None:
    for name in names:
        if not frame.column(name).is_numeric:
            raise SchemaError(f"imputation column {name!r} is not numeric")


def _predictors(frame: Frame, target: str) -> list[str]:
    return [n for n in frame.numeric_names if n != target]


def fit_impute(
    frame: Frame,
    median_columns: Sequence[str] = (),
    iterative_columns: Sequence[str] = (),
    max_rounds: int = DEFAULT_MAX_ROUNDS,
    tolerance: float = DEFAULT_TOLERANCE,
    ridge: float = DEFAULT_RIDGE,
) -> tuple[ImputationPlan, Frame]:
    """Fit medians and chained ridge regressors; return the plan and the filled frame.

    Iterative columns start from their observed medians, then each round
    regresses every column (ascending missing count) on all other numeric
    columns and overwrites its missing cells, clipped to the column's observed
    range (a regression fill never leaves the support of the data). Stops when the largest change of
    any imputed cell, relative to ``max(|old|, 1)``, drops below ``tolerance``.
    """
    plan = ImputationPlan(list(median_columns), list(iterative_columns), max_rounds, tolerance, ridge)
    planned = plan.median_columns + plan.iterative_columns
    _check_columns(frame, planned)
    unplanned = [n for n in frame.numeric_names if n not in planned and frame.missing[n].any()]
    if unplanned:
        raise UnfitError(f"numeric columns with missing cells not covered by the plan: {unplanned}")

    values = {n: np.array(frame.values[n], dtype=float) for n in frame.numeric_names}
    for name in planned:
        miss = frame.missing[name]
        if miss.all():
            raise UnfitError(f"column {name!r} is entirely missing")
        med = float(np.median(frame.values[name][~miss]))
        plan.fitted_medians[name] = med
        values[name][miss] = med
        if name in plan.iterative_columns:
            obs = frame.values[name][~miss]
            plan.bounds[name] = (float(obs.min()), float(obs.max()))

    plan.order = sorted(
        plan.iterative_columns, key=lambda n: (int(frame.missing[n].sum()), plan.iterative_columns.index(n))
    )
    active = [n for n in plan.order if frame.missing[n].any()]
    for name in plan.order:
        plan.fitted_regressors[name] = None

    for round_no in range(1, max_rounds + 1):
        max_change = 0.0
        for name in plan.order:
            miss = frame.missing[name]
            feats = _predictors(frame, name)
            if not feats:
                continue
            X = np.column_stack([values[f] for f in feats])
            try:
                fit = fit_ridge(X[~miss], values[name][~miss], feats, ridge)
            except np.linalg.LinAlgError:
                log.warning("singular regression for %s; falling back to median", name)
                plan.fitted_regressors[name] = None
                continue
            plan.fitted_regressors[name] = fit
            if miss.any():
                new = np.clip(fit.predict(X[miss]), *plan.bounds[name])
                old = values[name][miss]
                change = np.abs(new - old) / np.maximum(np.abs(old), 1.0)
                max_change = max(max_change, float(change.max()))
                values[name][miss] = new
        plan.rounds_run = round_no
        plan.change_history.append(max_change)
        if not active or max_change < tolerance:
            plan.converged = True
            break

    return plan, _with_values(frame, values, planned)


def _with_values(frame: Frame, values: dict[str, np.ndarray], filled: Sequence[str]) -> Frame:
    new_values = dict(frame.values)
    new_missing = dict(frame.missing)
    for name in filled:
        new_values[name] = values[name]
        new_missing[name] = np.zeros(frame.n_rows, dtype=bool)
    return Frame(frame.schema, new_values, new_missing)


def apply_impute(plan: ImputationPlan, frame: Frame) -> Frame:
    """Fill missing cells with the fitted medians and regressors (no refitting)."""
    planned = plan.median_columns + plan.iterative_columns
    names = set(frame.names)
    needed = set(planned)
    for fit in plan.fitted_regressors.values():
        if fit is not None:
            needed.update(fit.features)
    absent = sorted(needed - names)
    if absent:
        raise SchemaError(f"frame lacks columns required by the imputation plan: {absent}")
    _check_columns(frame, planned)
    unplanned = [n for n in frame.numeric_names if n not in planned and frame.missing[n].any()]
    if unplanned:
        raise SchemaError(f"numeric columns with missing cells not covered by the plan: {unplanned}")

    values = {n: np.array(frame.values[n], dtype=float) for n in frame.numeric_names}
    for name in planned:
        values[name][frame.missing[name]] = plan.fitted_medians[name]
    for name in plan.order:
        miss = frame.missing[name]
        fit = plan.fitted_regressors.get(name)
        if fit is None or not miss.any():
            continue
        X = np.column_stack([values[f] for f in fit.features])
        pred = fit.predict(X[miss])
        if name in plan.bounds:
            pred = np.clip(pred, *plan.bounds[name])
        values[name][miss] = pred
    return _with_values(frame, values, planned)
