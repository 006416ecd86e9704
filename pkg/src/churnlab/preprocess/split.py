"""Stratified train/test splitting and stratified k-fold assignment."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from churnlab.errors import DataError
from churnlab.tabular import Frame


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.2
    stratify_on: str | None = None  # defaults to the frame's target column
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split_indices(labels: np.ndarray, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    test = []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if len(members) < 2:
            raise DataError(f"class {cls!r} has fewer than 2 rows; cannot stratify")
        n_test = min(max(_round_half_up(len(members) * test_fraction), 1), len(members) - 1)
        test.append(rng.permutation(members)[:n_test])
    test_idx = np.sort(np.concatenate(test)) if test else np.array([], dtype=np.int64)
    mask = np.ones(len(labels), dtype=bool)
    mask[test_idx] = False
    return np.flatnonzero(mask), test_idx


def stratified_split(frame: Frame, spec: SplitSpec) -> tuple[Frame, Frame]:
    col = spec.stratify_on or frame.target_name
    if frame.missing[col].any():
        raise DataError(f"stratification column {col!r} has missing cells")
    labels = frame.values[col]
    if len(np.unique(labels)) > 2:
        raise DataError(f"stratification column {col!r} is not binary")
    train_idx, test_idx = stratified_split_indices(labels, spec.test_fraction, spec.seed)
    return frame.take(train_idx), frame.take(test_idx)


def stratified_folds(labels: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Fold id per row. Classes are shuffled and dealt round-robin, continuing
    the deal across classes so fold sizes differ by at most one."""
    if k < 2:
        raise ValueError("k must be >= 2")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    folds = np.empty(len(labels), dtype=np.int64)
    offset = 0
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if len(members) < k:
            raise DataError(f"class {cls!r} has {len(members)} rows, fewer than k={k} folds")
        perm = rng.permutation(members)
        folds[perm] = (offset + np.arange(len(perm))) % k
        offset += len(perm)
    return folds
