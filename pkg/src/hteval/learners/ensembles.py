"""Bagged (random forest) and boosted tree ensembles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..errors import NonFinite
from ..rng import derive_seed, make_rng
from .logistic import logit
from .trees import (KIND_MEAN, KIND_NEWTON, PackedTrees, Tree, active_order, depth_arg, grow_tree,
                    presort)


@dataclass(frozen=True)
class TreeEnsembleModel:
    """``mode`` is ``"bagged"`` (mean of leaf values) or ``"boosted"``
    (``base_score + learning_rate * sum`` of leaf scores, through expit when
    ``link == "logit"``)."""

    trees: tuple[Tree, ...]
    mode: str
    learning_rate: float = 1.0
    base_score: float = 0.0
    link: str = "identity"
    seed: int = 0
    _packed: PackedTrees = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_packed", PackedTrees(list(self.trees)))

    def raw_predict(self, X) -> np.ndarray:
        if self.mode == "bagged":
            return self._packed.predict_sum(X, 1.0) / len(self.trees)
        return self._packed.predict_sum(X, self.learning_rate, self.base_score)

    def predict(self, X) -> np.ndarray:
        raw = self.raw_predict(X)
        return expit(raw) if self.link == "logit" else raw

    predict_proba = predict


def _default_mtry(p: int) -> int:
    return max(1, math.ceil(math.sqrt(p)))


def _mean_stats(y):
    return np.column_stack([np.ones_like(y), y])


def fit_random_forest(X, y, n_trees: int = 500, max_depth: int | None = None, min_leaf: int = 10,
                      mtry: int | None = None, seed: int = 0, bootstrap: bool = True) -> TreeEnsembleModel:
    """Bootstrap forest of Gini trees; leaves hold the in-bag event fraction
    (or the target mean when ``y`` is continuous)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    mtry = _default_mtry(p) if mtry is None else int(mtry)
    if not 1 <= mtry <= max(p, 1):
        raise ValueError("mtry must lie in [1, n_features]")
    order = presort(X)
    base_stats = _mean_stats(y)
    trees = []
    for b in range(n_trees):
        tseed = derive_seed(seed, "tree", b)
        if bootstrap:
            # bootstrap multiplicities act as row weights
            counts = np.bincount(make_rng(tseed).integers(0, n, n), minlength=n).astype(np.float64)
            S = base_stats * counts[:, None]
            tree_order = active_order(order, counts > 0)
        else:
            S = base_stats
            tree_order = order.copy()
        f, thr, lc, rc, st = grow_tree(X, S, tree_order, KIND_MEAN, depth_arg(max_depth),
                                       float(min_leaf), 0.0, mtry, 0.0, np.uint64(tseed))
        trees.append(Tree(f, thr, lc, rc, st[:, 1] / st[:, 0]))
    return TreeEnsembleModel(tuple(trees), "bagged", seed=seed)


fit_random_forest_regressor = fit_random_forest


def _boost(X, y, n_rounds, depth, learning_rate, reg_lambda, min_child_weight, min_leaf,
           base_score, grad_hess, link, seed):
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, p = X.shape
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    if not 0.0 < learning_rate <= 1.0:
        raise ValueError("learning_rate must lie in (0, 1]")
    F = np.full(n, base_score)
    order = presort(X)
    trees = []
    for r in range(n_rounds):
        g, h = grad_hess(y, F)
        S = np.column_stack([np.ones(n), h, g])
        f, thr, lc, rc, st = grow_tree(X, S, order.copy(), KIND_NEWTON, depth_arg(depth), float(min_leaf),
                                       float(min_child_weight), p, float(reg_lambda),
                                       np.uint64(derive_seed(seed, "round", r)))
        leaf = -st[:, 2] / (st[:, 1] + reg_lambda)
        tree = Tree(f, thr, lc, rc, leaf)
        F = F + learning_rate * tree.predict(X)
        if not np.all(np.isfinite(F)):
            raise NonFinite("boosting scores overflowed")
        trees.append(tree)
    return TreeEnsembleModel(tuple(trees), "boosted", learning_rate, base_score, link, seed)


def _logistic_grad_hess(y, F):
    p = expit(F)
    return p - y, p * (1.0 - p)


def _squared_grad_hess(y, F):
    return F - y, np.ones_like(F)


def fit_gradient_boosted_trees(X, y, n_rounds: int = 200, depth: int = 3, learning_rate: float = 0.1,
                               seed: int = 0, reg_lambda: float = 1.0, min_child_weight: float = 1.0,
                               min_leaf: int = 1) -> TreeEnsembleModel:
    """Second-order boosting of the logistic loss.

    Starts from ``logit(base rate)``; each round fits a tree to the loss
    gradient/hessian with leaf scores ``-G/(H + reg_lambda)``.
    """
    y = np.asarray(y, dtype=np.float64)
    base = float(logit(y.mean()))
    return _boost(X, y, n_rounds, depth, learning_rate, reg_lambda, min_child_weight, min_leaf,
                  base, _logistic_grad_hess, "logit", seed)


def fit_gradient_boosted_regressor(X, y, n_rounds: int = 200, depth: int = 3,
                                   learning_rate: float = 0.1, seed: int = 0,
                                   reg_lambda: float = 1.0, min_child_weight: float = 1.0,
                                   min_leaf: int = 1) -> TreeEnsembleModel:
    y = np.asarray(y, dtype=np.float64)
    return _boost(X, y, n_rounds, depth, learning_rate, reg_lambda, min_child_weight, min_leaf,
                  float(y.mean()), _squared_grad_hess, "identity", seed)


def log_loss(y, p) -> float:
    p = np.clip(p, 1e-15, 1 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))
