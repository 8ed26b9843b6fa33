"""Probabilistic binary classifiers and regressors used as meta-learner plug-ins."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from ..errors import ConfigInvalid
from .elastic_net import ElasticNetLogisticModel, fit_elastic_net_logistic
from .ensembles import (
    TreeEnsembleModel,
    fit_gradient_boosted_regressor,
    fit_gradient_boosted_trees,
    fit_random_forest,
    fit_random_forest_regressor,
)
from .logistic import LinearModel, LogisticModel, clip_prob, fit_linear, fit_logistic, logit

__all__ = [
    "BaseLearner",
    "ElasticNetLogisticModel",
    "LinearModel",
    "LogisticModel",
    "TreeEnsembleModel",
    "clip_prob",
    "fit_elastic_net_logistic",
    "fit_gradient_boosted_regressor",
    "fit_gradient_boosted_trees",
    "fit_linear",
    "fit_logistic",
    "fit_random_forest",
    "fit_random_forest_regressor",
    "logit",
]

CLASSIFIER_FAMILIES = ("logistic", "penalized_logistic", "random_forest", "gradient_boosting")
REGRESSOR_FAMILIES = ("linear", "random_forest", "gradient_boosting")
LINEAR_FAMILIES = ("logistic", "penalized_logistic", "linear")

# second-stage (continuous target) family matching each first-stage family
REGRESSOR_FOR = {
    "logistic": "linear",
    "penalized_logistic": "linear",
    "linear": "linear",
    "random_forest": "random_forest",
    "gradient_boosting": "gradient_boosting",
}

_FOREST_KEYS = {"n_trees", "max_depth", "min_leaf", "mtry", "bootstrap"}
_BOOST_KEYS = {"n_rounds", "depth", "learning_rate", "reg_lambda", "min_child_weight", "min_leaf"}
_ALLOWED = {
    "logistic": {"ridge_eps"},
    "penalized_logistic": {"alpha", "cv_folds", "lambda_", "n_lambda"},
    "random_forest": _FOREST_KEYS,
    "gradient_boosting": _BOOST_KEYS,
    "linear": {"ridge_eps"},
}


@dataclass(frozen=True)
class BaseLearner:
    """A named model family plus hyperparameters; fitting is deferred."""

    family: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in _ALLOWED:
            raise ConfigInvalid(f"unknown base learner family {self.family!r}")
        unknown = set(self.params) - _ALLOWED[self.family]
        if unknown:
            raise ConfigInvalid(f"{self.family}: unknown hyperparameters {sorted(unknown)}")

    @property
    def is_linear(self) -> bool:
        return self.family in LINEAR_FAMILIES

    def fit_classifier(self, X, y, seed: int = 0):
        """Fitted model exposing ``predict_proba(X)``."""
        p = dict(self.params)
        if self.family == "logistic":
            return fit_logistic(X, y, **p)
        if self.family == "penalized_logistic":
            p.setdefault("alpha", 1.0)
            return fit_elastic_net_logistic(X, y, seed=seed, **p)
        if self.family == "random_forest":
            return fit_random_forest(X, y, seed=seed, **p)
        if self.family == "gradient_boosting":
            return fit_gradient_boosted_trees(X, y, seed=seed, **p)
        raise ConfigInvalid(f"{self.family!r} is not a classifier family")

    def regressor(self) -> "BaseLearner":
        fam = REGRESSOR_FOR[self.family]
        keep = _ALLOWED[fam] & set(self.params)
        return BaseLearner(fam, {k: self.params[k] for k in keep})

    def fit_regressor(self, X, y, seed: int = 0):
        """Fitted model exposing ``predict(X)`` for a continuous target."""
        fam = self.family
        p = dict(self.params)
        if fam in ("logistic", "penalized_logistic"):
            return self.regressor().fit_regressor(X, y, seed)
        if fam == "linear":
            return fit_linear(X, y, **p)
        if fam == "random_forest":
            return fit_random_forest_regressor(X, np.asarray(y, dtype=np.float64), seed=seed, **p)
        if fam == "gradient_boosting":
            return fit_gradient_boosted_regressor(X, y, seed=seed, **p)
        raise ConfigInvalid(f"{fam!r} is not a regressor family")
