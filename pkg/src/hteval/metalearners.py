"""T-, S-, X- and DR-learners composed from base learners.

Every fitted estimator exposes ``predict_ite(X)``. T- and S-learners also
expose ``arm_probs(X) -> (mu0, mu1)`` and their ITE is exactly
``mu1 - mu0``; X- and DR-learners end in an unconstrained regression, so
their ``arm_probs`` returns None and their ITE is clipped to [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .data import TrialDataset
from .errors import ArmEmpty, ConfigInvalid
from .learners import BaseLearner, fit_logistic
from .rng import derive_seed, make_rng


def _arrays(data: TrialDataset):
    X = data.covariates
    t = np.asarray(data.treatment).astype(np.int64)
    y = np.asarray(data.outcome).astype(np.float64)
    if t.sum() == 0 or t.sum() == len(t):
        raise ArmEmpty("both treatment arms must be non-empty")
    return X, t, y


def _as_base(base) -> BaseLearner:
    if isinstance(base, BaseLearner):
        return base
    if isinstance(base, str):
        return BaseLearner(base)
    return BaseLearner(base["family"], base.get("params", {}))


@dataclass(frozen=True)
class TLearner:
    mu0: Any
    mu1: Any

    def arm_probs(self, X):
        return self.mu0.predict_proba(X), self.mu1.predict_proba(X)

    def predict_ite(self, X):
        m0, m1 = self.arm_probs(X)
        return m1 - m0


def fit_t_learner(data: TrialDataset, base, seed: int = 0) -> TLearner:
    """Separate models of the same family on the treated and control rows."""
    X, t, y = _arrays(data)
    base = _as_base(base)
    tr, ct = t == 1, t == 0
    mu1 = base.fit_classifier(X[tr], y[tr], derive_seed(seed, "mu1"))
    mu0 = base.fit_classifier(X[ct], y[ct], derive_seed(seed, "mu0"))
    return TLearner(mu0, mu1)


def s_design(X, t, interactions: bool) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    if interactions:
        return np.hstack([X, t, X * t])
    return np.hstack([X, t])


@dataclass(frozen=True)
class SLearner:
    model: Any
    interactions: bool

    def arm_probs(self, X):
        n = np.asarray(X).shape[0]
        m0 = self.model.predict_proba(s_design(X, np.zeros(n), self.interactions))
        m1 = self.model.predict_proba(s_design(X, np.ones(n), self.interactions))
        return m0, m1

    def predict_ite(self, X):
        m0, m1 = self.arm_probs(X)
        return m1 - m0


def fit_s_learner(data: TrialDataset, base, interactions: bool = True, seed: int = 0) -> SLearner:
    """One model on ``[X, T]``; linear families also get ``T*X`` columns when
    ``interactions`` is set (ignored for tree families, which find their own)."""
    X, t, y = _arrays(data)
    base = _as_base(base)
    inter = bool(interactions) and base.is_linear
    model = base.fit_classifier(s_design(X, t, inter), y, derive_seed(seed, "s"))
    return SLearner(model, inter)


def x_imputed_effects(y, t, mu0_hat, mu1_hat):
    """Imputed effects: treated ``Y - mu0(x)``, controls ``mu1(x) - Y``.

    Returns ``(D0, D1)`` restricted to control and treated rows respectively.
    """
    y = np.asarray(y, dtype=np.float64)
    t = np.asarray(t)
    d1 = y[t == 1] - np.asarray(mu0_hat)[t == 1]
    d0 = np.asarray(mu1_hat)[t == 0] - y[t == 0]
    return d0, d1


@dataclass(frozen=True)
class XLearner:
    mu0: Any
    mu1: Any
    tau0: Any
    tau1: Any
    g: Any  # float, or a fitted propensity model

    def weight(self, X):
        if isinstance(self.g, (int, float)):
            return np.full(np.asarray(X).shape[0], float(self.g))
        return self.g.predict_proba(X)

    def arm_probs(self, X):
        return None

    def predict_ite(self, X):
        g = self.weight(X)
        return np.clip(g * self.tau0.predict(X) + (1.0 - g) * self.tau1.predict(X), -1.0, 1.0)


def fit_x_learner(data: TrialDataset, outcome_base, effect_base=None, g: float | str = 0.5,
                  seed: int = 0) -> XLearner:
    """Two-stage X-learner; ``g="propensity"`` blends with a logistic e(x)."""
    X, t, y = _arrays(data)
    outcome_base = _as_base(outcome_base)
    effect_base = outcome_base.regressor() if effect_base is None else _as_base(effect_base)
    tr, ct = t == 1, t == 0
    mu1 = outcome_base.fit_classifier(X[tr], y[tr], derive_seed(seed, "mu1"))
    mu0 = outcome_base.fit_classifier(X[ct], y[ct], derive_seed(seed, "mu0"))
    d0, d1 = x_imputed_effects(y, t, mu0.predict_proba(X), mu1.predict_proba(X))
    tau1 = effect_base.fit_regressor(X[tr], d1, derive_seed(seed, "tau1"))
    tau0 = effect_base.fit_regressor(X[ct], d0, derive_seed(seed, "tau0"))
    if g == "propensity":
        weight = fit_logistic(X, t)
    else:
        weight = float(g)
        if not 0.0 <= weight <= 1.0:
            raise ConfigInvalid("g must lie in [0, 1]")
    return XLearner(mu0, mu1, tau0, tau1, weight)


def dr_pseudo_outcome(y, t, mu0_hat, mu1_hat, e):
    """AIPW pseudo-outcome ``(T-e)/(e(1-e)) * (Y - mu_T) + mu1 - mu0``."""
    y = np.asarray(y, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    mu0_hat = np.asarray(mu0_hat, dtype=np.float64)
    mu1_hat = np.asarray(mu1_hat, dtype=np.float64)
    mu_t = np.where(t == 1, mu1_hat, mu0_hat)
    return (t - e) / (e * (1.0 - e)) * (y - mu_t) + mu1_hat - mu0_hat


def crossfit_folds(t, folds: int, seed: int) -> np.ndarray:
    """Fold label per row, assigned separately within each arm."""
    t = np.asarray(t)
    rng = make_rng(seed)
    out = np.empty(len(t), dtype=np.int64)
    for arm in (0, 1):
        idx = np.flatnonzero(t == arm)
        out[idx[rng.permutation(idx.size)]] = np.arange(idx.size) % folds
    return out


@dataclass(frozen=True)
class DRLearner:
    final: Any
    e: Any
    pseudo_outcome: np.ndarray
    folds: np.ndarray

    def arm_probs(self, X):
        return None

    def predict_ite(self, X):
        return np.clip(self.final.predict(X), -1.0, 1.0)


def fit_dr_learner(data: TrialDataset, outcome_base, final_base=None, e: float | str = 0.5,
                   folds: int = 2, seed: int = 0) -> DRLearner:
    """Cross-fitted doubly robust learner.

    ``e`` is the known randomization probability; ``e="estimate"`` fits a
    logistic propensity model (predictions clipped to [0.01, 0.99]).
    """
    X, t, y = _arrays(data)
    outcome_base = _as_base(outcome_base)
    final_base = outcome_base.regressor() if final_base is None else _as_base(final_base)
    if folds < 2:
        raise ConfigInvalid("folds must be >= 2")
    if e == "estimate":
        e_vec = np.clip(fit_logistic(X, t).predict_proba(X), 0.01, 0.99)
    else:
        e_vec = float(e)
        if not 0.0 < e_vec < 1.0:
            raise ConfigInvalid("e must lie in (0, 1)")
    fold = crossfit_folds(t, folds, derive_seed(seed, "folds"))
    mu0_hat = np.empty(len(y))
    mu1_hat = np.empty(len(y))
    for k in range(folds):
        out, inn = fold == k, fold != k
        tr, ct = inn & (t == 1), inn & (t == 0)
        if not tr.any() or not ct.any():
            raise ArmEmpty(f"cross-fitting fold {k} leaves an arm empty")
        m1 = outcome_base.fit_classifier(X[tr], y[tr], derive_seed(seed, "mu1", k))
        m0 = outcome_base.fit_classifier(X[ct], y[ct], derive_seed(seed, "mu0", k))
        mu1_hat[out] = m1.predict_proba(X[out])
        mu0_hat[out] = m0.predict_proba(X[out])
    phi = dr_pseudo_outcome(y, t, mu0_hat, mu1_hat, e_vec)
    final = final_base.fit_regressor(X, phi, derive_seed(seed, "final"))
    return DRLearner(final, e_vec, phi, fold)
