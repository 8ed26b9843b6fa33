"""Logistic regression by iteratively reweighted least squares, plus a plain
least-squares regressor used as a second-stage learner."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..errors import NonFinite, SingularDesign

PROB_CLIP = 1e-6
AUTO_RIDGE = 1e-4


def clip_prob(p):
    return np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP)


def logit(p):
    p = clip_prob(np.asarray(p, dtype=np.float64))
    return np.log(p) - np.log1p(-p)


def _design(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return np.hstack([np.ones((X.shape[0], 1)), X])


def _penalized_loglik(A, y, beta, ridge_eps):
    eta = A @ beta
    # log(1 + e^eta) computed stably
    ll = np.sum(y * eta - np.logaddexp(0.0, eta))
    return ll - 0.5 * ridge_eps * np.sum(beta[1:] ** 2)


@dataclass(frozen=True)
class LogisticModel:
    coefficients: np.ndarray  # intercept first
    converged: bool
    iterations: int
    ridge_eps: float
    hessian: np.ndarray  # of the penalized negative log-likelihood at the solution

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])

    @property
    def weights(self) -> np.ndarray:
        return self.coefficients[1:]

    def decision_function(self, X) -> np.ndarray:
        return _design(X) @ self.coefficients

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision_function(X))

    def covariance(self) -> np.ndarray:
        """Inverse observed information; the Wald covariance of the coefficients."""
        return np.linalg.pinv(self.hessian)


def _irls(A, y, ridge_eps, max_iter, tol):
    n, k = A.shape
    pen = np.full(k, ridge_eps)
    pen[0] = 0.0
    beta = np.zeros(k)
    ybar = np.clip(y.mean(), PROB_CLIP, 1 - PROB_CLIP)
    beta[0] = np.log(ybar / (1 - ybar))
    ll = _penalized_loglik(A, y, beta, ridge_eps)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(A @ beta)
        score = A.T @ (y - p) - pen * beta
        if np.max(np.abs(score)) < tol:
            converged = True
            it -= 1
            break
        w = np.maximum(p * (1 - p), 1e-12)
        H = (A * w[:, None]).T @ A + np.diag(pen)
        try:
            step = np.linalg.solve(H, score)
        except np.linalg.LinAlgError as exc:
            raise SingularDesign(str(exc)) from None
        if not np.all(np.isfinite(step)):
            raise SingularDesign("non-finite Newton step")
        # step halving guards against the rare Newton overshoot
        t = 1.0
        for _ in range(30):
            cand = beta + t * step
            ll_new = _penalized_loglik(A, y, cand, ridge_eps)
            if ll_new >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        beta, ll = cand, ll_new
        if not np.all(np.isfinite(beta)):
            raise NonFinite("coefficients overflowed")
    p = expit(A @ beta)
    w = p * (1 - p)
    H = (A * w[:, None]).T @ A + np.diag(pen)
    return beta, converged, it, H


def fit_logistic(X, y, ridge_eps: float = 1e-8, max_iter: int = 100,
                 tol: float = 1e-8) -> LogisticModel:
    """Maximize the Bernoulli log-likelihood minus ``ridge_eps * |w|^2 / 2``.

    The intercept is never penalized. Convergence means the max-norm of the
    penalized score fell below ``tol``. On a singular system the ridge is
    raised to 1e-4 once before giving up.
    """
    A = _design(X)
    y = np.asarray(y, dtype=np.float64)
    if A.shape[0] != y.shape[0]:
        raise ValueError("X and y disagree on the number of rows")
    try:
        beta, conv, it, H = _irls(A, y, ridge_eps, max_iter, tol)
    except SingularDesign:
        if ridge_eps >= AUTO_RIDGE:
            raise
        ridge_eps = AUTO_RIDGE
        beta, conv, it, H = _irls(A, y, ridge_eps, max_iter, tol)
    if not conv:
        warnings.warn(f"IRLS did not converge in {max_iter} iterations", RuntimeWarning,
                      stacklevel=2)
    return LogisticModel(beta, conv, it, ridge_eps, H)


@dataclass(frozen=True)
class LinearModel:
    coefficients: np.ndarray  # intercept first

    def predict(self, X) -> np.ndarray:
        return _design(X) @ self.coefficients


def fit_linear(X, y, ridge_eps: float = 1e-8) -> LinearModel:
    """Least squares with a tiny unpenalized-intercept ridge for stability."""
    A = _design(X)
    y = np.asarray(y, dtype=np.float64)
    pen = np.full(A.shape[1], ridge_eps * A.shape[0])
    pen[0] = 0.0
    try:
        beta = np.linalg.solve(A.T @ A + np.diag(pen), A.T @ y)
    except np.linalg.LinAlgError:
        beta = np.linalg.lstsq(A, y, rcond=None)[0]
    return LinearModel(beta)
