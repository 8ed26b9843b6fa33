"""Named estimator specs as used in run configs.

Names are ``"<meta>.<family>"`` with meta in t_learner, s_learner, x_learner,
dr_learner and family in logistic, penalized_logistic, random_forest,
gradient_boosting; or plain ``"causal_forest"``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .causal_forest import fit_causal_forest
from .data import TrialDataset
from .errors import ConfigInvalid
from .learners import CLASSIFIER_FAMILIES, REGRESSOR_FAMILIES, BaseLearner
from .metalearners import fit_dr_learner, fit_s_learner, fit_t_learner, fit_x_learner

META = ("t_learner", "s_learner", "x_learner", "dr_learner")
_META_KEYS = {
    "t_learner": set(),
    "s_learner": {"interactions"},
    "x_learner": {"g", "effect_family", "effect_params"},
    "dr_learner": {"e", "folds", "final_family", "final_params"},
}
_CF_KEYS = {"n_trees", "min_leaf_per_arm", "mtry", "honesty_fraction", "subsample_fraction",
            "max_depth"}


def registered_names() -> list[str]:
    return [f"{m}.{f}" for m in META for f in CLASSIFIER_FAMILIES] + ["causal_forest"]


@dataclass(frozen=True)
class EstimatorSpec:
    name: str
    params: Mapping[str, Any] = field(default_factory=dict)
    label: str | None = None
    replicates: int | None = None  # per-estimator override of the plan's replicate count

    def __post_init__(self):
        self._validate()

    @property
    def display(self) -> str:
        return self.label or self.name

    def _validate(self):
        if self.name == "causal_forest":
            unknown = set(self.params) - _CF_KEYS
            if unknown:
                raise ConfigInvalid(f"causal_forest: unknown parameters {sorted(unknown)}")
            return
        meta, _, family = self.name.partition(".")
        if meta not in META or family not in CLASSIFIER_FAMILIES:
            raise ConfigInvalid(f"unknown estimator {self.name!r}")
        base_params = {k: v for k, v in self.params.items() if k not in _META_KEYS[meta]}
        BaseLearner(family, base_params)
        for key in ("effect_family", "final_family"):
            fam = self.params.get(key)
            if fam is not None and fam not in REGRESSOR_FAMILIES:
                raise ConfigInvalid(f"{self.name}: {key} must be one of {REGRESSOR_FAMILIES}")

    def fit(self, data: TrialDataset, seed: int):
        """Fitted estimator exposing ``predict_ite`` and ``arm_probs``."""
        p = dict(self.params)
        if self.name == "causal_forest":
            model = fit_causal_forest(data.covariates, data.treatment, data.outcome, seed=seed, **p)
            return _NoArmProbs(model)
        meta, _, family = self.name.partition(".")
        meta_p = {k: p.pop(k) for k in list(p) if k in _META_KEYS[meta]}
        base = BaseLearner(family, p)
        if meta == "t_learner":
            return fit_t_learner(data, base, seed=seed)
        if meta == "s_learner":
            return fit_s_learner(data, base, interactions=meta_p.get("interactions", True), seed=seed)
        if meta == "x_learner":
            eff = None
            if "effect_family" in meta_p:
                eff = BaseLearner(meta_p["effect_family"], meta_p.get("effect_params", {}))
            return fit_x_learner(data, base, eff, g=meta_p.get("g", 0.5), seed=seed)
        fin = None
        if "final_family" in meta_p:
            fin = BaseLearner(meta_p["final_family"], meta_p.get("final_params", {}))
        return fit_dr_learner(data, base, fin, e=meta_p.get("e", 0.5),
                              folds=meta_p.get("folds", 2), seed=seed)


@dataclass(frozen=True)
class _NoArmProbs:
    model: Any

    def predict_ite(self, X) -> np.ndarray:
        return self.model.predict(X)

    def arm_probs(self, X):
        return None


@dataclass(frozen=True)
class FixedPredictions:
    """Wraps precomputed predictions, e.g. the true ITE of a simulation (row-aligned)."""

    ite_fn: Any
    probs_fn: Any = None

    def predict_ite(self, X):
        return self.ite_fn(X)

    def arm_probs(self, X):
        return None if self.probs_fn is None else self.probs_fn(X)


def parse_estimator(entry) -> EstimatorSpec:
    if isinstance(entry, EstimatorSpec):
        return entry
    if isinstance(entry, str):
        return EstimatorSpec(entry)
    if not isinstance(entry, Mapping) or "name" not in entry:
        raise ConfigInvalid(f"estimator entry must be a name or an object with 'name': {entry!r}")
    unknown = set(entry) - {"name", "params", "label", "replicates"}
    if unknown:
        raise ConfigInvalid(f"estimator {entry['name']!r}: unknown keys {sorted(unknown)}")
    return EstimatorSpec(entry["name"], dict(entry.get("params", {})), entry.get("label"),
                         entry.get("replicates"))
