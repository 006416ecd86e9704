import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from churnlab.explain import (
    ShapMatrix,
    beeswarm_export,
    global_importance,
    importance_rows,
    mean_attribution,
    sign_correlation,
    tree_shap,
)
from churnlab.models import BOOSTED, SINGLE, Hyperparams, Tree, TreeEnsemble, train_boosted, train_cart, train_forest
from oracles import brute_force_shap


def random_ensemble(seed, max_d=12, max_depth=4, max_trees=5, n=120):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, max_d + 1))
    X = rng.normal(size=(n, d))
    # discretize some columns so ties and repeated thresholds occur
    k = rng.integers(0, d + 1)
    X[:, :k] = np.round(X[:, :k])
    w = rng.normal(size=d)
    y = (X @ w + rng.normal(scale=1.0, size=n) > 0).astype(int)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    hp = Hyperparams(
        max_depth=int(rng.integers(1, max_depth + 1)),
        n_rounds=int(rng.integers(1, max_trees + 1)),
        learning_rate=float(rng.uniform(0.1, 1.0)),
        min_child_weight=0.0,
    )
    return train_boosted(X, y, hp), X


def test_single_leaf_tree():
    ens = TreeEnsemble([Tree.leaf(0.7, cover=10)], SINGLE, 0.0, 1.0, 3)
    s = tree_shap(ens, np.zeros((4, 3)))
    assert np.all(s.phi == 0) and s.base_value == pytest.approx(0.7)


def test_depth_one_two_player_example():
    t = Tree(
        np.array([0, -1, -1]),
        np.array([0.5, 0.0, 0.0]),
        np.array([1, -1, -1]),
        np.array([2, -1, -1]),
        np.array([0.0, -1.0, 1.0]),
        np.array([2.0, 1.0, 1.0]),
        np.array([2.0, 1.0, 1.0]),
    )
    ens = TreeEnsemble([t], SINGLE, 0.0, 1.0, 1)
    s = tree_shap(ens, np.array([[1.0], [0.0]]))
    assert s.base_value == 0.0
    assert s.phi[:, 0].tolist() == [1.0, -1.0]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_matches_exhaustive_oracle(seed):
    ens, X = random_ensemble(seed, max_d=8)
    rows = X[:6]
    s = tree_shap(ens, rows)
    phi, base = brute_force_shap(ens, rows)
    assert np.max(np.abs(s.phi - phi)) <= 1e-9
    assert s.base_value == pytest.approx(base, abs=1e-9)


def test_cart_matches_oracle():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(200, 5))
    y = (X[:, 0] + X[:, 1] * X[:, 2] > 0).astype(int)
    ens = train_cart(X, y, Hyperparams(max_depth=4))
    phi, base = brute_force_shap(ens, X[:5])
    s = tree_shap(ens, X[:5])
    assert np.max(np.abs(s.phi - phi)) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_local_accuracy(seed):
    ens, X = random_ensemble(seed)
    s = tree_shap(ens, X)
    assert np.max(np.abs(s.reconstruct() - ens.margin(X))) <= 1e-6


def test_dummy_feature_gets_zero():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(200, 4))
    X[:, 2] = 0.0  # constant, so never split on
    y = (X[:, 0] > 0).astype(int)
    ens = train_boosted(X, y, Hyperparams(max_depth=3, n_rounds=4))
    assert not any((t.feature == 2).any() for t in ens.trees)
    assert np.all(tree_shap(ens, X).phi[:, 2] == 0.0)


def test_duplicated_features_share_credit():
    x = np.array([0.0, 1.0])
    t = Tree(
        np.array([0, 1, -1, -1, -1]),
        np.array([0.5, 0.5, 0.0, 0.0, 0.0]),
        np.array([1, 2, -1, -1, -1]),
        np.array([4, 3, -1, -1, -1]),
        np.array([0.0, 0.0, -1.0, 1.0, 1.0]),
        np.array([4.0, 2.0, 1.0, 1.0, 2.0]),
        np.array([4.0, 2.0, 1.0, 1.0, 2.0]),
    )
    ens = TreeEnsemble([t], SINGLE, 0.0, 1.0, 2)
    X = np.column_stack([x, x])
    s = tree_shap(ens, X)
    phi, _ = brute_force_shap(ens, X)
    assert np.allclose(s.phi, phi, atol=1e-12)
    assert np.allclose(s.phi[:, 0], s.phi[:, 1])


def test_additivity_over_trees():
    ens, X = random_ensemble(11, max_trees=5)
    total = tree_shap(ens, X)
    parts = sum(
        tree_shap(TreeEnsemble([t], BOOSTED, 0.0, ens.learning_rate, ens.n_features), X).phi for t in ens.trees
    )
    assert np.max(np.abs(total.phi - parts)) <= 1e-9


def test_threads_and_chunks_do_not_change_output():
    ens, X = random_ensemble(5, n=700)
    a = tree_shap(ens, X, threads=1, chunk_size=10_000)
    b = tree_shap(ens, X, threads=4, chunk_size=64)
    assert np.array_equal(a.phi, b.phi) and a.base_value == b.base_value


def test_forest_rejected():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 2))
    f = train_forest(X, (X[:, 0] > 0).astype(int), Hyperparams(n_rounds=3, max_depth=2))
    with pytest.raises(ValueError, match="boosted"):
        tree_shap(f, X)


def test_shape_check():
    ens, X = random_ensemble(3)
    with pytest.raises(ValueError):
        tree_shap(ens, X[:, :-1] if X.shape[1] > 1 else np.zeros((2, 5)))


# ------------------------------------------------------------- importance


def shap_of(phi, names=None):
    phi = np.asarray(phi, dtype=float)
    return ShapMatrix(phi, 0.0, names or [f"f{j}" for j in range(phi.shape[1])])


def test_importance_worked_example():
    imp = global_importance(shap_of([[1, 0], [-1, 2], [1, -2]]))
    assert imp.values[0] == 1.0 and imp.values[1] == pytest.approx(4 / 3)
    assert imp.ranking == [1, 0]
    assert imp.rank_of("f1") == 1


def test_importance_trivial_cases():
    assert global_importance(shap_of([[0.0], [0.0]])).values[0] == 0.0
    assert global_importance(shap_of([[0.2], [-0.2]])).values[0] == pytest.approx(0.2)


def test_importance_stable_ties():
    imp = global_importance(shap_of([[1, -1, 1]]))
    assert imp.ranking == [0, 1, 2]
    rows = importance_rows(imp)
    assert [r["rank"] for r in rows] == [1, 2, 3]


@given(st.lists(st.lists(st.floats(-5, 5), min_size=3, max_size=3), min_size=1, max_size=20))
def test_importance_invariants(phi):
    imp = global_importance(shap_of(phi))
    assert np.all(imp.values >= 0)
    ordered = imp.values[imp.ranking]
    assert np.all(np.diff(ordered) <= 0)


# --------------------------------------------------------------- beeswarm


def test_beeswarm_single_constant():
    rows = beeswarm_export(shap_of([[0.3]]), np.array([[4.0]]))
    assert len(rows) == 1 and rows[0]["normalized_value"] == 0.5


def test_beeswarm_min_max_and_order():
    s = shap_of([[0.1, 2.0], [-0.1, -3.0]], ["a", "b"])
    rows = beeswarm_export(s, np.array([[1.0, 10.0], [3.0, 20.0]]))
    assert len(rows) == 4
    assert [r["feature"] for r in rows] == ["b", "b", "a", "a"]
    assert [r["normalized_value"] for r in rows[:2]] == [0.0, 1.0]


def test_beeswarm_shape_mismatch():
    with pytest.raises(ValueError):
        beeswarm_export(shap_of([[0.1, 0.2]]), np.zeros((1, 3)))


def test_sign_helpers():
    s = shap_of([[-1.0, 0.5], [0.0, -0.5], [1.0, 0.5]], ["Tenure", "Complain"])
    X = np.array([[3.0, 1.0], [2.0, 0.0], [1.0, 1.0]])
    assert sign_correlation(s, X, "Tenure") == pytest.approx(-1.0)
    assert mean_attribution(s, X, "Complain", X[:, 1] == 1) == 0.5
    assert np.isnan(mean_attribution(s, X, "Complain", np.zeros(3, bool)))
