import numpy as np
import pytest
from scipy.special import expit

from hteval.learners.ensembles import (TreeEnsembleModel, fit_gradient_boosted_regressor,
                                       fit_gradient_boosted_trees, fit_random_forest, log_loss)
from hteval.learners.logistic import fit_logistic, logit
from hteval.rng import derive_seed, make_rng


def xor_data(n=200, seed=0):
    """Quadrant-symmetric XOR: 50 points reflected into all four quadrants."""
    rng = np.random.default_rng(seed)
    q = rng.uniform(0.01, 1, (n // 4, 2))
    X = np.vstack([q * s for s in ([1, 1], [-1, 1], [1, -1], [-1, -1])])
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(float)
    return X, y


def walk(tree, x):
    """Reference traversal, independent of the compiled kernel."""
    node = 0
    while tree.feature[node] >= 0:
        node = tree.left[node] if x[tree.feature[node]] <= tree.threshold[node] else tree.right[node]
    return node


def test_constant_target():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((60, 3))
    m = fit_random_forest(X, np.ones(60), n_trees=20)
    np.testing.assert_array_equal(m.predict_proba(X), 1.0)


def test_root_only_tree_predicts_bootstrap_base_rate():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((80, 2))
    y = (rng.random(80) < 0.3).astype(float)
    m = fit_random_forest(X, y, n_trees=1, max_depth=0, seed=5)
    counts = np.bincount(make_rng(derive_seed(5, "tree", 0)).integers(0, 80, 80), minlength=80)
    rate = np.sum(counts * y) / 80
    np.testing.assert_allclose(m.predict_proba(rng.standard_normal((10, 2))), rate, rtol=1e-14)
    assert m.trees[0].n_nodes == 1


def test_xor_is_learned_by_forest_not_logistic():
    X, y = xor_data()
    # axis-aligned brute force: the two sign splits separate XOR exactly
    assert np.all(((X[:, 0] > 0) ^ (X[:, 1] > 0)) == y)
    forest = fit_random_forest(X, y, n_trees=50, max_depth=4, min_leaf=1, mtry=2, seed=0)
    assert np.mean((forest.predict_proba(X) > 0.5) == y) > 0.9
    # by symmetry the logistic MLE has zero slopes, so it predicts 0.5 everywhere
    lr = fit_logistic(X, y)
    np.testing.assert_allclose(lr.predict_proba(X), 0.5, atol=1e-8)
    assert np.mean((lr.predict_proba(X) > 0.5) == y) == 0.5


def test_memorizes_without_bootstrap():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((100, 3))
    y = (rng.random(100) < 0.5).astype(float)
    m = fit_random_forest(X, y, n_trees=1, min_leaf=1, mtry=3, bootstrap=False)
    np.testing.assert_array_equal(m.predict_proba(X), y)


def test_forest_predictions_match_leaf_walk_and_are_bounded():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((150, 4))
    y = (rng.random(150) < expit(X[:, 0])).astype(float)
    m = fit_random_forest(X, y, n_trees=7, min_leaf=3, seed=2)
    Xn = rng.standard_normal((30, 4))
    ref = [np.mean([t.value[walk(t, x)] for t in m.trees]) for x in Xn]
    np.testing.assert_allclose(m.predict_proba(Xn), ref, rtol=1e-12)
    assert np.all((m.predict_proba(Xn) >= 0) & (m.predict_proba(Xn) <= 1))
    for t in m.trees:  # every leaf is reachable from the root
        seen = {0}
        stack = [0]
        while stack:
            k = stack.pop()
            if t.feature[k] >= 0:
                seen |= {t.left[k], t.right[k]}
                stack += [t.left[k], t.right[k]]
        assert seen == set(range(t.n_nodes))


def test_bit_reproducible():
    X, y = xor_data(seed=4)
    a = fit_random_forest(X, y, n_trees=10, seed=9)
    b = fit_random_forest(X, y, n_trees=10, seed=9)
    c = fit_random_forest(X, y, n_trees=10, seed=10)
    assert a.predict_proba(X).tobytes() == b.predict_proba(X).tobytes()
    assert a.predict_proba(X).tobytes() != c.predict_proba(X).tobytes()
    g1 = fit_gradient_boosted_trees(X, y, n_rounds=20, seed=3)
    g2 = fit_gradient_boosted_trees(X, y, n_rounds=20, seed=3)
    assert g1.predict_proba(X).tobytes() == g2.predict_proba(X).tobytes()


def test_forest_input_validation():
    X, y = xor_data()
    for kw in ({"n_trees": 0}, {"min_leaf": 0}, {"mtry": 3}, {"mtry": 0}):
        with pytest.raises(ValueError):
            fit_random_forest(X, y, **kw)


# -- boosting ---------------------------------------------------------------------

def test_boosting_rejects_zero_rounds():
    X, y = xor_data()
    with pytest.raises(ValueError):
        fit_gradient_boosted_trees(X, y, n_rounds=0)


def test_boosting_depth_zero_is_base_rate():
    X, y = xor_data()
    y[:37] = 1
    m = fit_gradient_boosted_trees(X, y, n_rounds=1, learning_rate=1.0, depth=0)
    np.testing.assert_allclose(m.predict_proba(X), y.mean(), atol=1e-12)


def test_boosting_log_loss_non_increasing_on_monotone_data():
    rng = np.random.default_rng(5)
    x = np.sort(rng.uniform(0, 1, 120))[:, None]
    y = (rng.random(120) < x[:, 0]).astype(float)
    m = fit_gradient_boosted_trees(x, y, n_rounds=30, depth=2)
    losses = [log_loss(y, TreeEnsembleModel(m.trees[:k], "boosted", m.learning_rate, m.base_score,
                                           "logit").predict(x)) if k else log_loss(y, np.full(120, expit(m.base_score)))
              for k in range(31)]
    assert np.all(np.diff(losses) <= 1e-12)
    assert losses[-1] < losses[0]


def test_first_round_leaves_match_hand_newton_step():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((50, 2))
    y = (rng.random(50) < expit(2 * X[:, 0])).astype(float)
    lam = 1.0
    m = fit_gradient_boosted_trees(X, y, n_rounds=1, depth=1, learning_rate=1.0, reg_lambda=lam)
    tree = m.trees[0]
    p0 = y.mean()
    assert m.base_score == pytest.approx(float(logit(p0)))
    g = p0 - y
    h = np.full(50, p0 * (1 - p0))
    leaves = np.array([walk(tree, x) for x in X])
    for leaf in np.unique(leaves):
        sel = leaves == leaf
        assert tree.value[leaf] == pytest.approx(-g[sel].sum() / (h[sel].sum() + lam), rel=1e-10)

    # the chosen split is the best axis split by the second-order gain
    def score(sel):
        return g[sel].sum() ** 2 / (h[sel].sum() + lam)

    best = max(score(X[:, f] <= X[i, f]) + score(X[:, f] > X[i, f])
               for f in range(2) for i in range(50) if 0 < np.sum(X[:, f] <= X[i, f]) < 50)
    chosen = sum(score(leaves == leaf) for leaf in np.unique(leaves))
    assert chosen == pytest.approx(best, rel=1e-10)


def test_boosted_outputs_strictly_inside_unit_interval():
    X, y = xor_data(seed=7)
    p = fit_gradient_boosted_trees(X, y, n_rounds=100, depth=3, learning_rate=0.5).predict_proba(X)
    assert np.all((p > 0) & (p < 1))


def test_boosted_regressor_reduces_squared_error():
    rng = np.random.default_rng(8)
    X = rng.uniform(-1, 1, (200, 2))
    y = np.sin(3 * X[:, 0]) + 0.1 * rng.standard_normal(200)
    m = fit_gradient_boosted_regressor(X, y, n_rounds=100)
    assert np.mean((m.predict(X) - y) ** 2) < 0.2 * np.var(y)
