import numpy as np
import pytest
from scipy.special import expit

from hteval.errors import AllZeroVariance
from hteval.learners.elastic_net import fit_elastic_net_logistic, lambda_grid_for, lambda_max
from hteval.learners.logistic import fit_logistic, fit_linear
from hteval.simulation import generate, setting


def _loglik(b0, b1, x, y):
    eta = b0 + b1 * x
    return np.sum(y * eta - np.logaddexp(0.0, eta))


def grid_oracle(x, y, center=(0.0, 0.0), half=8.0, steps=41, rounds=40):
    """Maximize the 2-parameter log-likelihood by repeatedly zooming a dense grid."""
    c = np.array(center, dtype=float)
    for _ in range(rounds):
        g0 = np.linspace(c[0] - half, c[0] + half, steps)
        g1 = np.linspace(c[1] - half, c[1] + half, steps)
        B0, B1 = np.meshgrid(g0, g1, indexing="ij")
        eta = B0[..., None] + B1[..., None] * x
        ll = np.sum(y * eta - np.logaddexp(0.0, eta), axis=-1)
        i, j = np.unravel_index(np.argmax(ll), ll.shape)
        c = np.array([g0[i], g1[j]])
        half *= 0.25
    return c


X10 = np.array([-2.0, -1.5, -1.0, -0.5, 0.0, 0.3, 0.8, 1.2, 1.9, 2.5])
Y10 = np.array([0, 0, 1, 0, 0, 1, 0, 1, 1, 1])


def test_ten_point_fit_matches_grid_oracle():
    m = fit_logistic(X10, Y10)
    oracle = grid_oracle(X10, Y10)
    assert m.converged
    np.testing.assert_allclose(m.coefficients, oracle, atol=1e-6)


def test_intercept_only_balanced():
    m = fit_logistic(np.zeros((10, 0)), np.array([0, 1] * 5))
    assert abs(m.intercept) < 1e-12
    np.testing.assert_allclose(m.predict_proba(np.zeros((3, 0))), 0.5)


def test_all_zero_outcome():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((50, 2))
    m = fit_logistic(X, np.zeros(50), ridge_eps=1e-4)
    assert np.all(m.predict_proba(X) < 0.01)


def test_gradient_vanishes_against_finite_differences():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((300, 3))
    y = (rng.random(300) < expit(0.3 + X @ [1.0, -0.5, 0.2])).astype(float)
    ridge = 1e-3
    m = fit_logistic(X, y, ridge_eps=ridge)
    A = np.hstack([np.ones((300, 1)), X])

    def f(b):
        eta = A @ b
        return np.sum(y * eta - np.logaddexp(0.0, eta)) - 0.5 * ridge * np.sum(b[1:] ** 2)

    h = 1e-5
    grad = [(f(m.coefficients + h * e) - f(m.coefficients - h * e)) / (2 * h) for e in np.eye(4)]
    assert np.max(np.abs(grad)) < 1e-6 * 300  # finite differences carry O(h^2 * n) error
    assert m.converged


def test_covariance_matches_inverse_fisher_information():
    m = fit_logistic(X10, Y10)
    p = m.predict_proba(X10)
    A = np.column_stack([np.ones(10), X10])
    info = A.T @ (A * (p * (1 - p))[:, None])
    np.testing.assert_allclose(m.covariance(), np.linalg.inv(info), rtol=1e-6)


def test_separable_data_still_returns_finite_coefficients():
    x = np.arange(10.0)
    y = (x > 4.5).astype(float)
    with pytest.warns(RuntimeWarning):
        m = fit_logistic(x, y, max_iter=20)
    assert np.all(np.isfinite(m.coefficients))


def test_fit_linear_matches_lstsq():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((40, 3))
    y = X @ [1.0, 2.0, -1.0] + 0.5 + rng.standard_normal(40) * 0.1
    A = np.hstack([np.ones((40, 1)), X])
    np.testing.assert_allclose(fit_linear(X, y).coefficients, np.linalg.lstsq(A, y, rcond=None)[0],
                               atol=1e-6)


# -- elastic net ----------------------------------------------------------------

def _sparse_data(seed, n=400, p=6):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p)) * np.arange(1, p + 1)
    y = (rng.random(n) < expit(-0.2 + X[:, 0] - 0.5 * X[:, 1])).astype(float)
    return X, y


def test_lambda_above_max_gives_exact_zeros():
    X, y = _sparse_data(0)
    Xs = (X - X.mean(0)) / X.std(0)
    lmax = lambda_max(Xs, y, 1.0)
    for factor in (1.0001, 2.0, 1e6):
        m = fit_elastic_net_logistic(X, y, alpha=1.0, lambda_=lmax * factor)
        assert np.all(m.weights == 0.0)
        np.testing.assert_allclose(m.predict_proba(X), y.mean(), atol=1e-10)
    below = fit_elastic_net_logistic(X, y, alpha=1.0, lambda_=lmax * 0.9)
    assert np.any(below.weights != 0.0)


def test_ridge_limit_matches_irls():
    X, y = _sparse_data(1)
    en = fit_elastic_net_logistic(X, y, alpha=0.0, lambda_=1e-8)
    ir = fit_logistic(X, y, ridge_eps=1e-8)
    np.testing.assert_allclose(en.coefficients, ir.coefficients, atol=1e-4)


def test_cv_matches_sklearn_at_fixed_lambda():
    sklearn = pytest.importorskip("sklearn.linear_model")
    X, y = _sparse_data(2)
    lam = lambda_grid_for(X, y, 1.0)[10]
    ours = fit_elastic_net_logistic(X, y, alpha=1.0, lambda_=lam)
    mu, sd = X.mean(0), X.std(0)
    # our objective is mean deviance / 2 + lam * |w|_1; sklearn minimizes C * sum loss + |w|_1
    ref = sklearn.LogisticRegression(penalty="l1", C=1.0 / (lam * len(y)), solver="saga", tol=1e-10,
                                     max_iter=100000).fit((X - mu) / sd, y)
    np.testing.assert_allclose(ours.weights * sd, ref.coef_[0], atol=2e-3)


def test_cv_picks_grid_value_and_is_seeded():
    X, y = _sparse_data(3)
    a = fit_elastic_net_logistic(X, y, alpha=0.5, seed=7)
    b = fit_elastic_net_logistic(X, y, alpha=0.5, seed=7)
    assert a.lambda_ in a.lambda_grid
    np.testing.assert_array_equal(a.coefficients, b.coefficients)
    best = np.flatnonzero(a.cv_deviance == a.cv_deviance.min())
    assert a.lambda_ == a.lambda_grid[best[0]]  # the largest of tied minima


def test_constant_feature_rejected():
    X, y = _sparse_data(4)
    X[:, 2] = 1.0
    with pytest.raises(AllZeroVariance):
        fit_elastic_net_logistic(X, y)


@pytest.mark.xfail(strict=True, reason="CV-min lasso keeps some null features; measured 2% of seeds fully sparse")
def test_null_features_zero_at_cv_lambda_in_most_seeds():
    hits = 0
    for seed in range(50):
        trial = generate(setting("I", n=2000, seed=seed)).data
        ctrl = trial.treatment == 0
        m = fit_elastic_net_logistic(trial.covariates[ctrl], trial.outcome[ctrl], alpha=1.0, seed=seed)
        hits += bool(np.all(m.weights[10:] == 0.0))
    assert hits / 50 >= 0.8
