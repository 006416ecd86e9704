from churnlab.preprocess.chi2 import chi2_cdf, chi2_quantile
from churnlab.preprocess.encode import EncodingMap, apply_one_hot, one_hot
from churnlab.preprocess.impute import ImputationPlan, apply_impute, fit_impute
from churnlab.preprocess.outliers import OutlierStats, mahalanobis_filter
from churnlab.preprocess.pipeline import (
    PipelineArtifacts,
    PreprocessConfig,
    PreprocessResult,
    fit_pipeline,
)
from churnlab.preprocess.split import SplitSpec, stratified_folds, stratified_split

__all__ = [
    "EncodingMap",
    "ImputationPlan",
    "OutlierStats",
    "PipelineArtifacts",
    "PreprocessConfig",
    "PreprocessResult",
    "SplitSpec",
    "apply_impute",
    "apply_one_hot",
    "chi2_cdf",
    "chi2_quantile",
    "fit_impute",
    "fit_pipeline",
    "mahalanobis_filter",
    "one_hot",
    "stratified_folds",
    "stratified_split",
]
