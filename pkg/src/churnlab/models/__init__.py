import numpy as np

from churnlab.models.io import load_model, model_from_json, model_to_json, save_model
from churnlab.models.linear import LinearModel, train_logistic
from churnlab.models.numerics import logit, sigmoid
from churnlab.models.tree import (
    BAGGED,
    BOOSTED,
    SINGLE,
    Hyperparams,
    Tree,
    TreeEnsemble,
    TreeNode,
    train_boosted,
    train_cart,
    train_forest,
)

LEARNERS = ("logistic", "cart", "forest", "boosted")


def fit_learner(name: str, X, y, hp: Hyperparams, feature_names=(), threads: int = 1):
    """Train one of the four learners by name."""
    if name == "logistic":
        return train_logistic(X, y, l2=hp.l2, feature_names=feature_names)
    if name == "cart":
        return train_cart(X, y, hp, feature_names)
    if name == "forest":
        return train_forest(X, y, hp, feature_names, threads=threads)
    if name == "boosted":
        return train_boosted(X, y, hp, feature_names)
    raise ValueError(f"unknown learner {name!r}; expected one of {LEARNERS}")


def predict(model, X) -> np.ndarray:
    """Positive-class probability per row."""
    return model.predict_proba(X)


def predict_margin(model, X) -> np.ndarray:
    return model.margin(X)


__all__ = [
    "BAGGED",
    "BOOSTED",
    "LEARNERS",
    "SINGLE",
    "Hyperparams",
    "LinearModel",
    "Tree",
    "TreeEnsemble",
    "TreeNode",
    "fit_learner",
    "load_model",
    "logit",
    "model_from_json",
    "model_to_json",
    "predict",
    "predict_margin",
    "save_model",
    "sigmoid",
    "train_boosted",
    "train_cart",
    "train_forest",
    "train_logistic",
]
