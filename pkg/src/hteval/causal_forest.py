"""Honest causal forest.

Each tree draws a per-arm stratified subsample without replacement, splits it
into a "split" half (chooses the partition, maximizing
``n_L * n_R * (tau_L - tau_R)^2``) and a disjoint "estimate" half (fills the
leaves with treated-minus-control event rates). Nodes whose estimate half
falls below ``min_leaf_per_arm`` patients in either arm are pruned back to the
nearest valid ancestor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import TrialDataset
from .errors import ArmTooSmall, ShapeMismatch
from .learners.trees import (KIND_CAUSAL, PackedTrees, Tree, active_order, depth_arg, grow_tree,
                             presort, route_stats)
from .rng import derive_seed, make_rng


@dataclass(frozen=True)
class CausalTree(Tree):
    """A tree whose leaf values are effect estimates from the estimate half.

    ``split_rows`` / ``estimate_rows`` index the caller's training rows and are
    only retained when the forest was fit with ``keep_samples=True``.
    """

    split_rows: np.ndarray | None = None
    estimate_rows: np.ndarray | None = None


@dataclass(frozen=True)
class CausalForestModel:
    trees: tuple[CausalTree, ...]
    n_features: int
    min_leaf_per_arm: int
    honesty_fraction: float
    seed: int
    _packed: PackedTrees = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_packed", PackedTrees(list(self.trees)))

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict(self, X) -> np.ndarray:
        return predict_tau(self, X)

    predict_ite = predict


def _causal_stats(t, y):
    t = t.astype(np.float64)
    y = y.astype(np.float64)
    return np.column_stack([t, t * y, 1.0 - t, (1.0 - t) * y])


def _prune_and_compact(feature, threshold, left, right, est, min_leaf):
    """Collapse nodes with an invalid child, drop unreachable nodes, set leaf effects."""
    valid = (est[:, 0] >= min_leaf) & (est[:, 2] >= min_leaf)
    keep_order = []
    new_id = {}
    stack = [0]
    while stack:
        node = stack.pop()
        new_id[node] = len(keep_order)
        keep_order.append(node)
        if feature[node] >= 0 and valid[left[node]] and valid[right[node]]:
            stack.append(right[node])
            stack.append(left[node])
    m = len(keep_order)
    f = np.full(m, -1, np.int64)
    thr = np.zeros(m)
    lc = np.full(m, -1, np.int64)
    rc = np.full(m, -1, np.int64)
    val = np.zeros(m)
    for j, node in enumerate(keep_order):
        if feature[node] >= 0 and left[node] in new_id:
            f[j] = feature[node]
            thr[j] = threshold[node]
            lc[j] = new_id[left[node]]
            rc[j] = new_id[right[node]]
        else:
            n1, s1, n0, s0 = est[node]
            val[j] = (s1 / n1 - s0 / n0) if n1 > 0 and n0 > 0 else 0.0
    return f, thr, lc, rc, val


def _take(rng, idx, k):
    return np.sort(rng.choice(idx, size=k, replace=False)) if k < idx.size else idx.copy()


def fit_causal_forest(X, t=None, y=None, n_trees: int = 1000, min_leaf_per_arm: int = 10,
                      mtry: int | None = None, honesty_fraction: float = 0.5,
                      subsample_fraction: float = 0.5, seed: int = 0,
                      max_depth: int | None = None, keep_samples: bool = False) -> CausalForestModel:
    """Fit an honest causal forest on covariates ``X``, treatment ``t`` and outcome ``y``.

    Rows are put into a canonical (lexicographic) order before any sampling,
    so the fit does not depend on how the caller ordered the rows. ``X`` may
    also be a TrialDataset, in which case ``t`` and ``y`` are taken from it.
    """
    if isinstance(X, TrialDataset):
        X, t, y = X.covariates, X.treatment, X.outcome
    if t is None or y is None:
        raise TypeError("treatment and outcome are required")
    X = np.ascontiguousarray(X, dtype=np.float64)
    t = np.asarray(t).astype(np.int64)
    y = np.asarray(y).astype(np.float64)
    n, p = X.shape
    if not 0.0 < honesty_fraction < 1.0:
        raise ValueError("honesty_fraction must lie in (0, 1)")
    if not 0.0 < subsample_fraction <= 1.0:
        raise ValueError("subsample_fraction must lie in (0, 1]")
    n1 = int(t.sum())
    n0 = n - n1
    if min(n1, n0) < 2 * min_leaf_per_arm or min(n1, n0) < 4:
        raise ArmTooSmall(f"arms of size {n1}/{n0} need at least {2 * min_leaf_per_arm} each")
    mtry = max(1, math.ceil(math.sqrt(p))) if mtry is None else int(mtry)

    canon = np.lexsort(np.vstack([y, t, X.T[::-1]]))
    Xc, tc, yc = X[canon], t[canon], y[canon]
    order = presort(Xc)
    S = _causal_stats(tc, yc)
    arms = (np.flatnonzero(tc == 1), np.flatnonzero(tc == 0))

    trees = []
    for b in range(n_trees):
        tseed = derive_seed(seed, "tree", b)
        rng = make_rng(tseed)
        split_parts, est_parts = [], []
        for arm in arms:
            k = max(2, int(math.floor(arm.size * subsample_fraction + 0.5)))
            sub = rng.permutation(_take(rng, arm, k))
            k_split = min(max(1, int(math.floor(k * honesty_fraction + 0.5))), k - 1)
            split_parts.append(sub[:k_split])
            est_parts.append(sub[k_split:])
        split_rows = np.sort(np.concatenate(split_parts))
        est_rows = np.sort(np.concatenate(est_parts))
        active = np.zeros(n, dtype=bool)
        active[split_rows] = True
        f, thr, lc, rc, _ = grow_tree(Xc, S, active_order(order, active), KIND_CAUSAL,
                                      depth_arg(max_depth), float(min_leaf_per_arm), 0.0, mtry,
                                      0.0, np.uint64(tseed))
        est = route_stats(Xc[est_rows], S[est_rows], f, thr, lc, rc, f.shape[0])
        f, thr, lc, rc, val = _prune_and_compact(f, thr, lc, rc, est, min_leaf_per_arm)
        if keep_samples:
            trees.append(CausalTree(f, thr, lc, rc, val, np.sort(canon[split_rows]),
                                    np.sort(canon[est_rows])))
        else:
            trees.append(CausalTree(f, thr, lc, rc, val))
    return CausalForestModel(tuple(trees), p, min_leaf_per_arm, honesty_fraction, seed)


def predict_tau(model: CausalForestModel, X) -> np.ndarray:
    """Average of per-tree leaf effects at each row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise ShapeMismatch(f"expected {model.n_features} features, got {X.shape[1]}")
    return model._packed.predict_sum(X, 1.0) / model.n_trees
