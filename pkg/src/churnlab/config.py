"""Versioned JSON run configuration.

Relative paths resolve against the config file's directory. ``threads`` and
``out_dir`` are deliberately left out of the snapshot embedded in the
manifest: neither may change a data output.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from churnlab.errors import ConfigError
from churnlab.models.tree import Hyperparams
from churnlab.preprocess.pipeline import DEFAULT_ITERATIVE_COLUMNS, DEFAULT_MEDIAN_COLUMNS, PreprocessConfig
from churnlab.preprocess.split import SplitSpec
from churnlab.segment import RfmMapping

CONFIG_VERSION = 1


def default_schema_path() -> Path:
    return Path(str(resources.files("churnlab") / "data" / "ecommerce_schema.json"))


def default_hyperparams() -> dict[str, Hyperparams]:
    # conventional defaults (depth 6, 200 rounds/trees, eta 0.3, lambda 1, full sampling) for every learner
    return {name: Hyperparams() for name in ("logistic", "cart", "forest", "boosted")}


@dataclass
class PreprocessSettings:
    median_columns: list[str] = field(default_factory=lambda: list(DEFAULT_MEDIAN_COLUMNS))
    iterative_columns: list[str] = field(default_factory=lambda: list(DEFAULT_ITERATIVE_COLUMNS))
    max_rounds: int = 10
    tolerance: float = 1e-3
    ridge: float = 1e-3
    alpha: float = 0.001
    unseen_categories: str = "error"
    test_fraction: float = 0.2


@dataclass
class SurvivalSettings:
    duration: str = "Tenure"
    event: str = "Churn"
    horizons: list[float] = field(default_factory=lambda: [0.0, 6.0, 12.0, 21.0, 24.0, 60.0])


@dataclass
class RfmSettings:
    recency: str = "DaySinceLastOrder"
    frequency: str = "OrderCount"
    monetary: str = "CashbackAmount"
    customer_id: str | None = "CustomerID"
    rules: str | None = None  # JSON rules file; None uses the built-in table


@dataclass
class RunConfig:
    dataset: str
    schema: str | None = None
    out_dir: str = "out"
    seed: int = 0
    threads: int = 1
    cv_folds: int = 5
    threshold: float = 0.5
    explain_chunk: int = 2048
    preprocess: PreprocessSettings = field(default_factory=PreprocessSettings)
    models: dict[str, Hyperparams] = field(default_factory=default_hyperparams)
    survival: SurvivalSettings = field(default_factory=SurvivalSettings)
    rfm: RfmSettings = field(default_factory=RfmSettings)
    base_dir: str = "."  # directory relative paths resolve against

    # -- derived views
    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path

    @property
    def dataset_path(self) -> Path:
        return self.resolve(self.dataset)

    @property
    def schema_path(self) -> Path:
        return self.resolve(self.schema) if self.schema else default_schema_path()

    @property
    def out_path(self) -> Path:
        return self.resolve(self.out_dir)

    @property
    def rules_path(self) -> Path | None:
        return self.resolve(self.rfm.rules) if self.rfm.rules else None

    def preprocess_config(self) -> PreprocessConfig:
        p = self.preprocess
        return PreprocessConfig(
            median_columns=tuple(p.median_columns),
            iterative_columns=tuple(p.iterative_columns),
            max_rounds=p.max_rounds,
            tolerance=p.tolerance,
            ridge=p.ridge,
            alpha=p.alpha,
            unseen_categories=p.unseen_categories,
            split=SplitSpec(test_fraction=p.test_fraction, seed=self.seed),
        )

    def hyperparams(self, learner: str) -> Hyperparams:
        # the run seed reaches every stochastic learner
        return dataclasses.replace(self.models[learner], seed=self.seed)

    def rfm_mapping(self) -> RfmMapping:
        r = self.rfm
        return RfmMapping(r.recency, r.frequency, r.monetary, r.customer_id)

    def validate(self) -> None:
        if not self.dataset_path.is_file():
            raise ConfigError(f"dataset not found: {self.dataset_path}")
        if not self.schema_path.is_file():
            raise ConfigError(f"schema not found: {self.schema_path}")
        if self.rules_path is not None and not self.rules_path.is_file():
            raise ConfigError(f"segment rules not found: {self.rules_path}")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be at least 2")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie in (0, 1)")
        missing = {"logistic", "cart", "forest", "boosted"} - set(self.models)
        if missing:
            raise ConfigError(f"hyperparameters missing for {sorted(missing)}")

    def snapshot(self) -> dict:
        """Everything that can affect an output, with paths as written."""
        doc = self.to_json()
        for key in ("threads", "out_dir", "base_dir"):
            doc.pop(key)
        return doc

    def to_json(self) -> dict[str, Any]:
        doc = dataclasses.asdict(self)
        doc["models"] = {k: v.to_json() for k, v in self.models.items()}
        for hp in doc["models"].values():
            hp.pop("seed")
        return {"version": CONFIG_VERSION, **doc}


def _build(cls, doc: dict, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_json(doc: dict, base_dir: str | Path = ".") -> RunConfig:
    doc = dict(doc)
    version = doc.pop("version", None)
    if version != CONFIG_VERSION:
        raise ConfigError(f"config version {version!r} is not supported (expected {CONFIG_VERSION})")
    doc.pop("base_dir", None)
    if "dataset" not in doc:
        raise ConfigError("config needs a 'dataset' path")
    models = default_hyperparams()
    for name, hp in (doc.pop("models", None) or {}).items():
        if name not in models:
            raise ConfigError(f"unknown learner {name!r} in models")
        hp = {k: v for k, v in hp.items() if k != "seed"}
        models[name] = _build(Hyperparams, {**models[name].to_json(), **hp}, f"models.{name}")
    sections = {
        "preprocess": PreprocessSettings,
        "survival": SurvivalSettings,
        "rfm": RfmSettings,
    }
    built = {k: _build(cls, doc.pop(k, None) or {}, k) for k, cls in sections.items()}
    cfg = _build(RunConfig, {**doc, **built, "models": models}, "config")
    cfg.base_dir = str(base_dir)
    return cfg


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    cfg = config_from_json(doc, base_dir=path.parent)
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg
