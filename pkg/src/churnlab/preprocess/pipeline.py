"""Fitted, replayable preprocessing: dedup -> impute -> one-hot -> Mahalanobis -> split."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from churnlab.errors import ArtifactVersionError
from churnlab.preprocess.encode import EncodingMap, apply_one_hot, one_hot
from churnlab.preprocess.impute import (
    DEFAULT_MAX_ROUNDS,
    DEFAULT_RIDGE,
    DEFAULT_TOLERANCE,
    ImputationPlan,
    apply_impute,
    fit_impute,
)
from churnlab.preprocess.outliers import OutlierStats, mahalanobis_filter
from churnlab.preprocess.split import SplitSpec, stratified_split_indices
from churnlab.tabular import ColumnSchema, Frame, deduplicate

ARTIFACT_FORMAT = "churnlab.pipeline"
ARTIFACT_VERSION = 1

DEFAULT_MEDIAN_COLUMNS = ("HourSpendOnApp",)
DEFAULT_ITERATIVE_COLUMNS = (
    "DaySinceLastOrder",
    "OrderAmountHikeFromLastYear",
    "Tenure",
    "OrderCount",
    "CouponUsed",
    "WarehouseToHome",
)


@dataclass
class PreprocessConfig:
    median_columns: Sequence[str] = DEFAULT_MEDIAN_COLUMNS
    iterative_columns: Sequence[str] = DEFAULT_ITERATIVE_COLUMNS
    max_rounds: int = DEFAULT_MAX_ROUNDS
    tolerance: float = DEFAULT_TOLERANCE
    ridge: float = DEFAULT_RIDGE
    alpha: float = 0.001
    unseen_categories: str = "error"
    split: SplitSpec = field(default_factory=SplitSpec)


@dataclass
class PipelineArtifacts:
    schema: tuple[ColumnSchema, ...]
    imputation: ImputationPlan
    encoding: EncodingMap
    outliers: OutlierStats
    feature_names: list[str]
    split: SplitSpec
    row_counts: dict[str, int]

    def transform(self, frame: Frame) -> Frame:
        """Replay imputation and encoding on new rows (no outlier removal)."""
        return apply_one_hot(self.encoding, apply_impute(self.imputation, frame))

    def design_matrix(self, frame: Frame) -> np.ndarray:
        return self.transform(frame).matrix(self.feature_names)

    def to_json(self) -> dict:
        return {
            "format": ARTIFACT_FORMAT,
            "version": ARTIFACT_VERSION,
            "schema": [c.to_json() for c in self.schema],
            "imputation": self.imputation.to_json(),
            "encoding": self.encoding.to_json(),
            "outliers": self.outliers.to_json(),
            "feature_names": list(self.feature_names),
            "split": {
                "test_fraction": self.split.test_fraction,
                "stratify_on": self.split.stratify_on,
                "seed": self.split.seed,
            },
            "row_counts": dict(self.row_counts),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PipelineArtifacts":
        check_artifact(doc, ARTIFACT_FORMAT, ARTIFACT_VERSION)
        return cls(
            schema=tuple(ColumnSchema.from_json(c) for c in doc["schema"]),
            imputation=ImputationPlan.from_json(doc["imputation"]),
            encoding=EncodingMap.from_json(doc["encoding"]),
            outliers=OutlierStats.from_json(doc["outliers"]),
            feature_names=list(doc["feature_names"]),
            split=SplitSpec(**doc["split"]),
            row_counts={k: int(v) for k, v in doc["row_counts"].items()},
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "PipelineArtifacts":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def check_artifact(doc: dict, fmt: str, version: int) -> None:
    if doc.get("format") != fmt:
        raise ArtifactVersionError(f"expected a {fmt!r} artifact, got {doc.get('format')!r}")
    if doc.get("version") != version:
        raise ArtifactVersionError(
            f"{fmt} artifact version {doc.get('version')!r} is incompatible with version {version}"
        )


@dataclass
class PreprocessResult:
    artifacts: PipelineArtifacts
    clean: Frame  # imputed, not encoded, outliers removed: feeds survival and RFM
    encoded: Frame  # encoded, outliers removed
    train: Frame
    test: Frame
    flagged: np.ndarray  # row indices into the deduplicated frame
    squared_distances: np.ndarray
    train_index: np.ndarray  # row indices into ``encoded``
    test_index: np.ndarray


def fit_pipeline(raw: Frame, cfg: PreprocessConfig | None = None) -> PreprocessResult:
    cfg = cfg or PreprocessConfig()
    dedup = deduplicate(raw)
    plan, imputed = fit_impute(
        dedup,
        cfg.median_columns,
        cfg.iterative_columns,
        max_rounds=cfg.max_rounds,
        tolerance=cfg.tolerance,
        ridge=cfg.ridge,
    )
    emap, encoded = one_hot(imputed, unseen=cfg.unseen_categories)
    stats, kept, flagged, d2 = mahalanobis_filter(encoded, alpha=cfg.alpha)
    keep = np.setdiff1d(np.arange(encoded.n_rows), flagged)
    clean = imputed.take(keep)

    train_idx, test_idx = stratified_split_indices(
        kept.values[cfg.split.stratify_on or kept.target_name], cfg.split.test_fraction, cfg.split.seed
    )
    artifacts = PipelineArtifacts(
        schema=raw.schema,
        imputation=plan,
        encoding=emap,
        outliers=stats,
        feature_names=list(stats.feature_names),
        split=cfg.split,
        row_counts={
            "raw": raw.n_rows,
            "deduplicated": dedup.n_rows,
            "duplicates_removed": raw.n_rows - dedup.n_rows,
            "outliers_removed": int(len(flagged)),
            "final": kept.n_rows,
            "train": int(len(train_idx)),
            "test": int(len(test_idx)),
        },
    )
    return PreprocessResult(
        artifacts, clean, kept, kept.take(train_idx), kept.take(test_idx), flagged, d2, train_idx, test_idx
    )
