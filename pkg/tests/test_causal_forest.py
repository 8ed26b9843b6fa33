import numpy as np
import pytest

from hteval.causal_forest import CausalForestModel, CausalTree, fit_causal_forest, predict_tau
from hteval.errors import ArmTooSmall, ShapeMismatch
from hteval.simulation import generate, null_setting, setting


def small_trial(n=1200, seed=0):
    return generate(setting("I", n=n, seed=seed)).data


def leaf_walk(tree, x):
    node = 0
    while tree.feature[node] >= 0:
        node = tree.left[node] if x[tree.feature[node]] <= tree.threshold[node] else tree.right[node]
    return node


def root_only(value):
    one = np.array([-1])
    return CausalTree(one, np.zeros(1), one, one, np.array([value]))


def test_honesty_halves_are_disjoint():
    d = small_trial()
    m = fit_causal_forest(d, n_trees=20, min_leaf_per_arm=5, keep_samples=True, seed=1)
    for tree in m.trees:
        assert tree.split_rows.size and tree.estimate_rows.size
        assert not np.intersect1d(tree.split_rows, tree.estimate_rows).size


def test_root_only_tree_is_estimate_half_risk_difference():
    d = small_trial()
    m = fit_causal_forest(d, n_trees=1, max_depth=0, keep_samples=True, seed=2)
    rows = m.trees[0].estimate_rows
    t, y = d.treatment[rows], d.outcome[rows]
    rd = y[t == 1].mean() - y[t == 0].mean()
    np.testing.assert_allclose(m.predict(d.covariates), rd, rtol=1e-12)


def test_leaves_meet_per_arm_minimum_in_estimate_half():
    d = small_trial(seed=3)
    m = fit_causal_forest(d, n_trees=10, min_leaf_per_arm=8, keep_samples=True, seed=3)
    for tree in m.trees:
        rows = tree.estimate_rows
        leaves = np.array([leaf_walk(tree, x) for x in d.covariates[rows]])
        for leaf in np.flatnonzero(tree.feature < 0):
            arm = d.treatment[rows][leaves == leaf]
            assert arm.sum() >= 8 and (arm == 0).sum() >= 8
            t, y = arm, d.outcome[rows][leaves == leaf]
            assert tree.value[leaf] == pytest.approx(y[t == 1].mean() - y[t == 0].mean(), rel=1e-12)


def test_prediction_matches_leaf_walk_oracle_and_bounds():
    d = small_trial(seed=4)
    m = fit_causal_forest(d, n_trees=15, min_leaf_per_arm=5, seed=4)
    X = d.covariates[:50]
    ref = [np.mean([t.value[leaf_walk(t, x)] for t in m.trees]) for x in X]
    pred = predict_tau(m, X)
    np.testing.assert_allclose(pred, ref, rtol=1e-12, atol=1e-15)
    lo = min(t.value[t.feature < 0].min() for t in m.trees)
    hi = max(t.value[t.feature < 0].max() for t in m.trees)
    assert np.all((pred >= lo - 1e-15) & (pred <= hi + 1e-15))
    assert np.all(np.abs(pred) <= 1)


def test_handmade_forests():
    X = np.zeros((3, 2))
    two = CausalForestModel((root_only(0.2), root_only(-0.1)), 2, 5, 0.5, 0)
    np.testing.assert_allclose(predict_tau(two, X), 0.05)
    zero = CausalForestModel((root_only(0.0),) * 3, 2, 5, 0.5, 0)
    np.testing.assert_array_equal(predict_tau(zero, X), 0.0)
    with pytest.raises(ShapeMismatch):
        predict_tau(two, np.zeros((3, 3)))


def test_row_order_does_not_matter():
    d = small_trial(seed=5)
    perm = np.random.default_rng(0).permutation(d.n)
    a = fit_causal_forest(d.covariates, d.treatment, d.outcome, n_trees=10, min_leaf_per_arm=5, seed=7)
    b = fit_causal_forest(d.covariates[perm], d.treatment[perm], d.outcome[perm], n_trees=10,
                          min_leaf_per_arm=5, seed=7)
    np.testing.assert_array_equal(a.predict(d.covariates), b.predict(d.covariates))


def test_seeded_reproducibility():
    d = small_trial(seed=6)
    a = fit_causal_forest(d, n_trees=10, seed=11).predict(d.covariates)
    b = fit_causal_forest(d, n_trees=10, seed=11).predict(d.covariates)
    assert a.tobytes() == b.tobytes()


def test_null_effect_predictions_are_small():
    d = generate(null_setting(n=10000, seed=8)).data
    m = fit_causal_forest(d, n_trees=200, seed=8)
    assert np.mean(np.abs(m.predict(d.covariates))) < 0.03


def test_arm_too_small():
    d = small_trial(n=100)
    with pytest.raises(ArmTooSmall):
        fit_causal_forest(d, min_leaf_per_arm=40)
