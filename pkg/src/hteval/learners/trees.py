"""Axis-aligned binary tree growth (numba kernels).

One greedy depth-first grower serves three split criteria, selected by
``kind``. Each row contributes a small vector of sufficient statistics and
candidate splits are scored from left/right sums of those vectors:

``KIND_MEAN``   stats ``[1, y]``. Maximizes ``sL^2/nL + sR^2/nR - s^2/n``,
                the variance reduction. For a 0/1 target this equals half the
                weighted Gini-impurity reduction, so classification forests
                use it as their Gini criterion.
``KIND_NEWTON`` stats ``[1, h, g]``. Second-order boosting gain
                ``GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam)``.
``KIND_CAUSAL`` stats ``[t, t*y, 1-t, (1-t)*y]``. Maximizes
                ``nL * nR * (tauL - tauR)^2`` with per-arm child minima.

Thresholds are midpoints between consecutive distinct values; rows with
``x <= threshold`` go left. Feature subsampling uses an in-kernel
splitmix64 stream seeded per tree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

KIND_MEAN = 0
KIND_NEWTON = 1
KIND_CAUSAL = 2

_GAIN_EPS = 1e-12


@njit(cache=True, nogil=True)
def _splitmix(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True, nogil=True)
def _scan_mean(X, S, order, f, s, e, T, min_leaf, best_gain):
    n_l = 0.0
    s_l = 0.0
    base = T[1] * T[1] / T[0]
    best_thr = np.nan
    for i in range(s, e - 1):
        r = order[f, i]
        n_l += S[r, 0]
        s_l += S[r, 1]
        v0 = X[r, f]
        v1 = X[order[f, i + 1], f]
        if v1 <= v0:
            continue
        n_r = T[0] - n_l
        if n_l < min_leaf or n_r < min_leaf:
            continue
        s_r = T[1] - s_l
        g = s_l * s_l / n_l + s_r * s_r / n_r - base
        if g > best_gain:
            best_gain = g
            best_thr = _midpoint(v0, v1)
    return best_gain, best_thr


@njit(cache=True, nogil=True)
def _scan_newton(X, S, order, f, s, e, T, min_leaf, min_child_weight, lam, best_gain):
    n_l = 0.0
    h_l = 0.0
    g_l = 0.0
    base = T[2] * T[2] / (T[1] + lam)
    best_thr = np.nan
    for i in range(s, e - 1):
        r = order[f, i]
        n_l += S[r, 0]
        h_l += S[r, 1]
        g_l += S[r, 2]
        v0 = X[r, f]
        v1 = X[order[f, i + 1], f]
        if v1 <= v0:
            continue
        n_r = T[0] - n_l
        h_r = T[1] - h_l
        if n_l < min_leaf or n_r < min_leaf or h_l < min_child_weight or h_r < min_child_weight:
            continue
        g_r = T[2] - g_l
        g = g_l * g_l / (h_l + lam) + g_r * g_r / (h_r + lam) - base
        if g > best_gain:
            best_gain = g
            best_thr = _midpoint(v0, v1)
    return best_gain, best_thr


@njit(cache=True, nogil=True)
def _scan_causal(X, S, order, f, s, e, T, min_leaf, best_gain):
    t_l = 0.0
    ty_l = 0.0
    c_l = 0.0
    cy_l = 0.0
    best_thr = np.nan
    for i in range(s, e - 1):
        r = order[f, i]
        t_l += S[r, 0]
        ty_l += S[r, 1]
        c_l += S[r, 2]
        cy_l += S[r, 3]
        v0 = X[r, f]
        v1 = X[order[f, i + 1], f]
        if v1 <= v0:
            continue
        t_r = T[0] - t_l
        c_r = T[2] - c_l
        if t_l < min_leaf or c_l < min_leaf or t_r < min_leaf or c_r < min_leaf:
            continue
        d = (ty_l / t_l - cy_l / c_l) - ((T[1] - ty_l) / t_r - (T[3] - cy_l) / c_r)
        g = (t_l + c_l) * (t_r + c_r) * d * d
        if g > best_gain:
            best_gain = g
            best_thr = _midpoint(v0, v1)
    return best_gain, best_thr


@njit(cache=True, nogil=True)
def _midpoint(v0, v1):
    thr = 0.5 * (v0 + v1)
    if thr >= v1:
        thr = v0
    return thr


@njit(cache=True, nogil=True)
def _scale(kind, T, lam):
    if kind == 0:
        return T[1] * T[1] / T[0]
    if kind == 1:
        return T[2] * T[2] / (T[1] + lam)
    return 0.0


@njit(cache=True, nogil=True)
def grow_tree(X, S, order, kind, max_depth, min_leaf, min_child_weight, mtry, lam, seed):
    """Grow one tree over the rows listed in ``order``. ``max_depth < 0`` means unlimited.

    ``order`` is a (p, m) array: row ``f`` lists the m active row indices
    sorted by ``X[:, f]``. It is consumed (partitioned in place). ``S`` is
    indexed by row id. Returns (feature, threshold, left, right, node_stats)
    with -1 marking leaves in ``feature``/``left``/``right``.
    """
    p = order.shape[0]
    m_all = order.shape[1]
    k = S.shape[1]
    cap = 2 * m_all + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    stats = np.zeros((cap, k))

    go_left = np.zeros(X.shape[0], np.bool_)
    buf = np.empty(m_all, np.int64)
    feats = np.arange(p)
    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = m_all
    st_depth[0] = 0
    top = 1
    n_nodes = 1
    rng = np.uint64(seed)
    T = np.zeros(k)

    while top > 0:
        top -= 1
        node = st_node[top]
        s = st_start[top]
        e = st_end[top]
        d = st_depth[top]
        for j in range(k):
            T[j] = 0.0
        if p > 0:
            for i in range(s, e):
                r = order[0, i]
                for j in range(k):
                    T[j] += S[r, j]
        for j in range(k):
            stats[node, j] = T[j]
        m = e - s
        if m < 2 or p == 0 or (max_depth >= 0 and d >= max_depth):
            continue

        # partial Fisher-Yates draw of mtry candidate features
        for j in range(p):
            feats[j] = j
        n_try = min(mtry, p)
        for j in range(n_try):
            rng, z = _splitmix(rng)
            jj = j + np.int64(z % np.uint64(p - j))
            tmp = feats[j]
            feats[j] = feats[jj]
            feats[jj] = tmp

        best_gain = _GAIN_EPS * (1.0 + abs(_scale(kind, T, lam)))
        best_f = -1
        best_thr = 0.0
        for fi in range(n_try):
            f = feats[fi]
            if kind == 0:
                g, thr = _scan_mean(X, S, order, f, s, e, T, min_leaf, best_gain)
            elif kind == 1:
                g, thr = _scan_newton(X, S, order, f, s, e, T, min_leaf, min_child_weight, lam,
                                      best_gain)
            else:
                g, thr = _scan_causal(X, S, order, f, s, e, T, min_leaf, best_gain)
            if not np.isnan(thr):
                best_gain = g
                best_f = f
                best_thr = thr
        if best_f < 0:
            continue

        nl = 0
        for i in range(s, e):
            r = order[0, i]
            gl = X[r, best_f] <= best_thr
            go_left[r] = gl
            if gl:
                nl += 1
        # stable partition of every feature's sorted segment
        for f in range(p):
            a = s
            b = 0
            for i in range(s, e):
                r = order[f, i]
                if go_left[r]:
                    order[f, a] = r
                    a += 1
                else:
                    buf[b] = r
                    b += 1
            for i in range(b):
                order[f, a + i] = buf[i]

        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lc
        right[node] = rc
        st_node[top] = rc
        st_start[top] = s + nl
        st_end[top] = e
        st_depth[top] = d + 1
        top += 1
        st_node[top] = lc
        st_start[top] = s
        st_end[top] = s + nl
        st_depth[top] = d + 1
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), stats[:n_nodes].copy())


def presort(X: np.ndarray) -> np.ndarray:
    """(p, n) row indices sorted stably by each column of ``X``."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int64))


def active_order(order: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Restrict a presorted order to the rows where ``active`` is true (keeps sortedness)."""
    p = order.shape[0]
    return np.ascontiguousarray(order[active[order]].reshape(p, -1))


@njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, left, right):
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True, nogil=True)
def route_stats(X, S, feature, threshold, left, right, n_nodes):
    """Per-node sums of ``S`` over every row whose path passes through the node."""
    k = S.shape[1]
    out = np.zeros((n_nodes, k))
    for i in range(X.shape[0]):
        node = 0
        while True:
            for j in range(k):
                out[node, j] += S[i, j]
            if feature[node] < 0:
                break
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
    return out


@njit(cache=True, nogil=True)
def _predict_packed(X, feature, threshold, left, right, value, roots, weight, offset):
    n = X.shape[0]
    out = np.zeros(n)
    for t in range(roots.shape[0]):
        root = roots[t]
        for i in range(n):
            node = root
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] += value[node]
    return offset + weight * out


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]


class PackedTrees:
    """Concatenated node arrays of many trees for fast batched prediction."""

    def __init__(self, trees):
        offsets = np.cumsum([0] + [t.n_nodes for t in trees[:-1]]).astype(np.int64)
        self.roots = offsets
        self.feature = np.concatenate([t.feature for t in trees])
        self.threshold = np.concatenate([t.threshold for t in trees])
        self.value = np.concatenate([t.value for t in trees])
        self.left = np.concatenate([np.where(t.left >= 0, t.left + o, -1) for t, o in zip(trees, offsets)])
        self.right = np.concatenate([np.where(t.right >= 0, t.right + o, -1) for t, o in zip(trees, offsets)])

    def predict_sum(self, X, weight: float, offset: float = 0.0) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _predict_packed(X, self.feature, self.threshold, self.left, self.right,
                               self.value, self.roots, float(weight), float(offset))


def depth_arg(max_depth) -> int:
    return -1 if max_depth is None else int(max_depth)
