"""Classification metrics, stratified cross-validation and model selection."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from churnlab.preprocess.split import stratified_folds

METRIC_NAMES = ("accuracy", "precision", "recall", "f1", "error_rate")
DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "ConfusionCounts":
        y_true = np.asarray(y_true).astype(bool)
        y_pred = np.asarray(y_pred).astype(bool)
        return cls(
            int(np.sum(y_true & y_pred)),
            int(np.sum(~y_true & y_pred)),
            int(np.sum(~y_true & ~y_pred)),
            int(np.sum(y_true & ~y_pred)),
        )


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    error_rate: float
    degenerate: tuple[str, ...] = ()  # metrics whose denominator was zero

    def as_dict(self) -> dict[str, float]:
        return {m: getattr(self, m) for m in METRIC_NAMES}


def metrics(counts: ConfusionCounts) -> Metrics:
    """Accuracy, precision, recall, F1 and error rate.

    Zero denominators yield 0 and are listed in ``degenerate``.
    """
    if counts.total <= 0:
        raise ValueError("no evaluated rows")
    degenerate = []
    accuracy = (counts.tp + counts.tn) / counts.total
    if counts.tp + counts.fp:
        precision = counts.tp / (counts.tp + counts.fp)
    else:
        precision = 0.0
        degenerate.append("precision")
    if counts.tp + counts.fn:
        recall = counts.tp / (counts.tp + counts.fn)
    else:
        recall = 0.0
        degenerate.append("recall")
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        degenerate.append("f1")
    return Metrics(accuracy, precision, recall, f1, 1.0 - accuracy, tuple(degenerate))


def evaluate(model, X, y, threshold: float = DEFAULT_THRESHOLD) -> Metrics:
    return metrics(ConfusionCounts.from_predictions(y, model.predict_proba(X) >= threshold))


@dataclass
class CVResult:
    folds: list[Metrics]
    mean: dict[str, float]
    std: dict[str, float]  # population standard deviation across folds


def summarize_folds(folds: Sequence[Metrics]) -> CVResult:
    table = {m: np.array([getattr(f, m) for f in folds]) for m in METRIC_NAMES}
    return CVResult(
        list(folds),
        {m: float(v.mean()) for m, v in table.items()},
        {m: float(v.std(ddof=0)) for m, v in table.items()},
    )


def cross_validate(
    fit: Callable[[np.ndarray, np.ndarray], object],
    X,
    y,
    k: int = 5,
    seed: int = 0,
    threads: int = 1,
    threshold: float = DEFAULT_THRESHOLD,
) -> CVResult:
    """Stratified k-fold CV. ``fit(X_train, y_train)`` returns a model with
    ``predict_proba``. Results are ordered by fold index regardless of threads."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    fold_of = stratified_folds(y, k, seed)

    def run(i):
        val = fold_of == i
        model = fit(X[~val], y[~val])
        return evaluate(model, X[val], y[val], threshold)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            folds = list(pool.map(run, range(k)))
    else:
        folds = [run(i) for i in range(k)]
    return summarize_folds(folds)


@dataclass
class ModelReport:
    name: str
    train: Metrics
    test: Metrics
    cv_mean: dict[str, float] = field(default_factory=dict)
    cv_std: dict[str, float] = field(default_factory=dict)

    @property
    def train_test_gap(self) -> dict[str, float]:
        return {m: getattr(self.train, m) - getattr(self.test, m) for m in METRIC_NAMES}

    def row(self) -> dict:
        out = {"model": self.name}
        for m in METRIC_NAMES:
            out[m] = getattr(self.test, m)
        for m in METRIC_NAMES:
            out[f"train_{m}"] = getattr(self.train, m)
        for m, v in self.train_test_gap.items():
            out[f"gap_{m}"] = v
        for m in METRIC_NAMES:
            out[f"cv_mean_{m}"] = self.cv_mean.get(m, float("nan"))
            out[f"cv_std_{m}"] = self.cv_std.get(m, float("nan"))
        out["degenerate"] = ";".join(sorted(set(self.train.degenerate) | set(self.test.degenerate)))
        return out

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "train": asdict(self.train),
            "test": asdict(self.test),
            "train_test_gap": self.train_test_gap,
            "cv_mean": self.cv_mean,
            "cv_std": self.cv_std,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ModelReport":
        def m(d):
            return Metrics(**{**d, "degenerate": tuple(d.get("degenerate", ()))})

        return cls(doc["name"], m(doc["train"]), m(doc["test"]), dict(doc["cv_mean"]), dict(doc["cv_std"]))


@dataclass(frozen=True)
class Selection:
    name: str
    tie: bool  # True when the winner matched a runner-up on every criterion


def _selection_key(r: ModelReport):
    gap = r.train.recall - r.test.recall
    return (-r.test.recall, gap, r.cv_std.get("recall", 0.0), r.name)


def select_model(reports: Sequence[ModelReport]) -> Selection:
    """Highest test recall; then smallest train-test recall gap; then smallest
    CV recall std; then name order."""
    if not reports:
        raise ValueError("no reports to select from")
    ranked = sorted(reports, key=_selection_key)
    tie = len(ranked) > 1 and _selection_key(ranked[0])[:3] == _selection_key(ranked[1])[:3]
    return Selection(ranked[0].name, tie)


def write_report_csv(reports: Sequence[ModelReport], path: str | Path) -> None:
    rows = [r.row() for r in reports]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def write_report_json(reports: Sequence[ModelReport], selection: Selection | None, path: str | Path) -> None:
    doc = {"models": [r.to_json() for r in reports]}
    if selection is not None:
        doc["selected"] = selection.name
        doc["selection_tie"] = selection.tie
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
