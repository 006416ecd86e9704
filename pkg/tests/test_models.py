import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from churnlab.errors import ArtifactVersionError
from churnlab.models import (
    BAGGED,
    BOOSTED,
    LEARNERS,
    SINGLE,
    Hyperparams,
    fit_learner,
    load_model,
    model_from_json,
    model_to_json,
    save_model,
    sigmoid,
    train_boosted,
    train_cart,
    train_forest,
    train_logistic,
)
from churnlab.models.linear import logistic_objective
from churnlab.models.numerics import PROB_EPS, logit
from oracles import all_gini_splits, best_gini_split, gini_gain, logistic_gd


def noisy(n=300, d=4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (X[:, 0] - 0.5 * X[:, 1] + rng.normal(scale=0.8, size=n) > 0).astype(int)
    return X, y


# -------------------------------------------------------------- logistic


@pytest.mark.parametrize("l2", [0.1, 1.0, 10.0])
def test_logistic_matches_gradient_descent(l2):
    X, y = noisy(200, 3, seed=1)
    m = train_logistic(X, y, l2=l2)
    w, b, obj = logistic_gd(X, y, l2)
    assert logistic_objective(m.weights, m.intercept, X, y, l2) <= obj + 1e-6
    assert np.allclose(m.weights, w, atol=1e-5) and m.intercept == pytest.approx(b, abs=1e-5)


def test_logistic_balanced_symmetric_data():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0, 0, 1, 1])
    m = train_logistic(X, y, l2=1.0)
    assert abs(m.intercept) < 1e-10
    assert m.weights[0] > 0
    p = m.predict_proba(X)
    assert p[0] + p[3] == pytest.approx(1.0, abs=1e-12)


def test_logistic_separable_stays_finite():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    m = train_logistic(X, np.array([0, 0, 1, 1]), l2=1e-6)
    assert np.all(np.isfinite(m.weights))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_logistic_monotone_in_dominant_feature(seed):
    X, y = noisy(150, 2, seed)
    m = train_logistic(X, y, l2=1.0)
    grid = np.column_stack([np.linspace(-3, 3, 25), np.zeros(25)])
    p = m.predict_proba(grid)
    assert np.all(np.diff(p) >= 0) or np.all(np.diff(p) <= 0)


# ------------------------------------------------------------------ CART


def test_cart_step_threshold():
    X = np.arange(1.0, 9.0)[:, None]
    y = (X[:, 0] > 3).astype(int)
    t = train_cart(X, y, Hyperparams(max_depth=1)).trees[0]
    assert t.feature[0] == 0 and 3.0 <= t.threshold[0] < 4.0
    assert t.threshold[0] == 3.5


def test_cart_pure_data_single_leaf():
    X = np.random.default_rng(0).normal(size=(20, 3))
    model = train_cart(X, np.ones(20, int))
    assert model.trees[0].n_nodes == 1
    assert model.trees[0].value[0] == pytest.approx(logit(1.0))
    assert model.predict_proba(X)[0] == pytest.approx(1.0 - PROB_EPS, abs=1e-15)


def test_cart_tie_goes_to_lower_feature():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    X = np.column_stack([x, x])
    t = train_cart(X, np.array([0, 0, 1, 1]), Hyperparams(max_depth=1)).trees[0]
    assert t.feature[0] == 0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.integers(5, 40), st.integers(1, 4))
def test_cart_root_split_matches_exhaustive_search(seed, n, d):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 6, size=(n, d)).astype(float)
    y = rng.integers(0, 2, size=n)
    f, thr, gain = best_gini_split(X, y)
    t = train_cart(X, y, Hyperparams(max_depth=1, min_child_weight=0.0)).trees[0]
    if f is None:
        assert t.n_nodes == 1
        return
    assert gini_gain(X, y, t.feature[0], t.threshold[0]) == pytest.approx(gain, abs=1e-9)
    # when the optimum is clearly unique the chosen split must be it
    near = [c for c in all_gini_splits(X, y) if c[2] > gain - 1e-9]
    if len(near) == 1:
        assert (t.feature[0], t.threshold[0]) == (f, thr)


def test_cart_leaf_values_are_clipped_log_odds():
    X, y = noisy(200, 3)
    model = train_cart(X, y, Hyperparams(max_depth=4))
    t = model.trees[0]
    leaves = t.left < 0
    assert np.all(np.isfinite(t.value[leaves]))
    p = sigmoid(t.value[leaves])
    assert np.all((p >= PROB_EPS * 0.99) & (p <= 1 - PROB_EPS * 0.99))
    assert model.mode == SINGLE
    assert t.depth <= 4


def test_cart_leaf_fraction():
    X = np.array([[0.0], [0.0], [0.0], [1.0]])
    y = np.array([1, 0, 0, 1])
    t = train_cart(X, y, Hyperparams(max_depth=1, min_child_weight=0.0)).trees[0]
    leaf_left = t.left[0]
    assert sigmoid(t.value[leaf_left]) == pytest.approx(1 / 3)
    assert t.cover[leaf_left] == 3 and t.count[leaf_left] == 3


# ---------------------------------------------------------------- forest


def test_forest_single_tree_without_resampling_equals_cart():
    X, y = noisy(200, 4)
    hp = Hyperparams(max_depth=5, n_rounds=1, bootstrap=False, colsample=1.0)
    f = train_forest(X, y, hp)
    c = train_cart(X, y, hp)
    assert f.mode == BAGGED
    assert f.trees[0].to_json() == c.trees[0].to_json()
    assert np.allclose(f.predict_proba(X), c.predict_proba(X), atol=1e-12)


def test_forest_deterministic_across_threads():
    X, y = noisy(200, 5)
    hp = Hyperparams(max_depth=4, n_rounds=12, seed=3)
    a = train_forest(X, y, hp, threads=1)
    b = train_forest(X, y, hp, threads=4)
    assert model_to_json(a) == model_to_json(b)
    c = train_forest(X, y, Hyperparams(max_depth=4, n_rounds=12, seed=4))
    assert model_to_json(a) != model_to_json(c)


def test_forest_probability_is_mean_of_trees():
    X, y = noisy(150, 4)
    f = train_forest(X, y, Hyperparams(max_depth=3, n_rounds=7))
    by_hand = np.mean([sigmoid(t.predict(X)) for t in f.trees], axis=0)
    assert np.allclose(f.predict_proba(X), by_hand)


def test_forest_samples_sqrt_features():
    # with ceil(sqrt(9)) = 3 candidates per split, some root splits must avoid the dominant feature
    rng = np.random.default_rng(0)
    X = rng.normal(size=(300, 9))
    y = (X[:, 0] > 0).astype(int)
    f = train_forest(X, y, Hyperparams(max_depth=1, n_rounds=40))
    roots = {int(t.feature[0]) for t in f.trees}
    assert len(roots) > 1 and 0 in roots


# --------------------------------------------------------------- boosting


def test_boosting_one_newton_step_by_hand():
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    y = np.array([0, 0, 1, 1])
    hp = Hyperparams(max_depth=1, n_rounds=1, learning_rate=0.3, reg_lambda=1.0, min_child_weight=0.0)
    m = train_boosted(X, y, hp)
    # base logit(0.5) = 0; g = p - y = -/+0.5, h = 0.25; leaf = -G / (H + lambda)
    assert m.base_score == 0.0 and m.mode == BOOSTED
    t = m.trees[0]
    assert t.value[t.left[0]] == pytest.approx(-1.0 / 1.5)
    assert t.value[t.right[0]] == pytest.approx(1.0 / 1.5)
    assert np.allclose(m.margin(X), [-0.2, -0.2, 0.2, 0.2])


def test_boosting_huge_lambda_stays_at_base():
    X, y = noisy(200, 3)
    m = train_boosted(X, y, Hyperparams(n_rounds=5, reg_lambda=1e12))
    assert np.allclose(m.margin(X), logit(y.mean()), atol=1e-8)


def test_boosting_base_score_is_prior_log_odds():
    X, y = noisy(100, 2)
    m = train_boosted(X, y, Hyperparams(n_rounds=2))
    assert m.base_score == pytest.approx(np.log(y.mean() / (1 - y.mean())))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_boosting_training_loss_non_increasing(seed):
    X, y = noisy(150, 3, seed)
    losses = []
    for rounds in range(1, 9):
        m = train_boosted(X, y, Hyperparams(max_depth=2, n_rounds=rounds, learning_rate=0.3))
        margin = m.margin(X)
        losses.append(np.sum(np.logaddexp(0, margin) - y * margin))
    assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))


def test_boosting_gamma_prunes_everything():
    X, y = noisy(100, 2)
    m = train_boosted(X, y, Hyperparams(n_rounds=3, gamma=1e9))
    assert all(t.n_nodes == 1 for t in m.trees)


# ------------------------------------------------------------ shared API


@pytest.mark.parametrize("name", LEARNERS)
def test_monotone_step_recovered_by_every_learner(name):
    X = np.linspace(0, 10, 200)[:, None]
    y = (X[:, 0] > 5).astype(int)
    model = fit_learner(name, X, y, Hyperparams(n_rounds=20, l2=1e-3))
    pred = (model.predict_proba(X) >= 0.5).astype(int)
    assert pred[y == 1].all()
    assert (pred == y).mean() >= 0.98


@pytest.mark.parametrize("name", LEARNERS)
def test_json_round_trip_is_exact(name, tmp_path):
    X, y = noisy(120, 3)
    model = fit_learner(name, X, y, Hyperparams(n_rounds=5, max_depth=3))
    save_model(model, tmp_path / "m.json", name=name)
    back = load_model(tmp_path / "m.json")
    assert np.array_equal(back.predict_proba(X), model.predict_proba(X))
    assert model_to_json(back, name) == model_to_json(model, name)


def test_model_version_mismatch():
    X, y = noisy(50, 2)
    doc = model_to_json(train_cart(X, y))
    doc["version"] = 7
    with pytest.raises(ArtifactVersionError):
        model_from_json(json.loads(json.dumps(doc)))
    doc["version"], doc["format"] = 1, "other"
    with pytest.raises(ArtifactVersionError):
        model_from_json(doc)


def test_bad_inputs():
    with pytest.raises(ValueError):
        train_cart(np.zeros((3, 2)), np.array([0, 2, 1]))
    with pytest.raises(ValueError):
        train_boosted(np.array([[np.nan], [1.0]]), np.array([0, 1]))
    with pytest.raises(ValueError):
        fit_learner("svm", np.zeros((2, 1)), np.array([0, 1]), Hyperparams())
    with pytest.raises(ValueError):
        train_cart(np.zeros((4, 2)), np.array([0, 1, 0, 1])).predict_proba(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        Hyperparams(subsample=0.0)


def test_probabilities_in_unit_interval():
    X, y = noisy(200, 4)
    for name in LEARNERS:
        p = fit_learner(name, X, y, Hyperparams(n_rounds=10)).predict_proba(X)
        assert np.all((p > 0) & (p < 1))
