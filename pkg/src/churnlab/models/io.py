"""Versioned JSON model artifacts shared by the train, explain and score stages."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from churnlab.errors import ArtifactVersionError
from churnlab.models.linear import LinearModel
from churnlab.models.tree import Tree, TreeEnsemble

MODEL_FORMAT = "churnlab.model"
MODEL_VERSION = 1


def model_to_json(model, name: str = "", hyperparams: dict | None = None) -> dict:
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "name": name}
    if isinstance(model, LinearModel):
        doc.update(
            kind="linear",
            feature_names=list(model.feature_names),
            weights=model.weights.tolist(),
            intercept=model.intercept,
        )
    elif isinstance(model, TreeEnsemble):
        doc.update(
            kind="tree_ensemble",
            mode=model.mode,
            base_score=model.base_score,
            learning_rate=model.learning_rate,
            n_features=model.n_features,
            feature_names=list(model.feature_names),
            trees=[t.to_json() for t in model.trees],
        )
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    if hyperparams is not None:
        doc["hyperparams"] = hyperparams
    return doc


def model_from_json(doc: dict):
    if doc.get("format") != MODEL_FORMAT:
        raise ArtifactVersionError(f"not a model artifact (format {doc.get('format')!r})")
    if doc.get("version") != MODEL_VERSION:
        raise ArtifactVersionError(
            f"model artifact version {doc.get('version')!r} is incompatible with version {MODEL_VERSION}"
        )
    if doc["kind"] == "linear":
        return LinearModel(np.asarray(doc["weights"], dtype=float), float(doc["intercept"]), list(doc["feature_names"]))
    if doc["kind"] == "tree_ensemble":
        return TreeEnsemble(
            [Tree.from_json(t) for t in doc["trees"]],
            doc["mode"],
            float(doc["base_score"]),
            float(doc["learning_rate"]),
            int(doc["n_features"]),
            list(doc["feature_names"]),
        )
    raise ArtifactVersionError(f"unknown model kind {doc['kind']!r}")


def save_model(model, path: str | Path, name: str = "", hyperparams: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model, name, hyperparams), fh, indent=1)
        fh.write("\n")


def load_model(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        return model_from_json(json.load(fh))
