"""Effect summaries, concordance-for-benefit, calibration and plot-data metrics.

Sign convention: outcomes are adverse events, so ITE = P(event | treated) -
P(event | control) is negative when treatment helps. Observed pair benefit
``Y_treated - Y_control`` follows the same orientation, so concordance still
means "larger predicted ITE goes with larger observed difference".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .errors import (
    ArmEmpty,
    DegenerateBins,
    HteError,
    LengthMismatch,
    SingleClass,
    TooFewPairs,
    Unavailable,
)
from .learners import fit_logistic

Z95 = float(norm.ppf(0.975))
SCALES = ("rd", "rr", "or")


def _robust_mean(x) -> float:
    # exact for constant input, unlike a plain pairwise sum
    x = np.asarray(x, dtype=np.float64)
    c0 = x[0]
    return float(c0 + np.mean(x - c0))


@dataclass(frozen=True)
class EffectSummary:
    n_treated: int
    n_control: int
    events_treated: int
    events_control: int
    risk_treated: float
    risk_control: float
    risk_difference: float
    rd_ci: tuple[float, float]
    risk_ratio: float
    rr_ci: tuple[float, float]
    odds_ratio: float
    or_ci: tuple[float, float]
    continuity_corrected: bool = False

    def on_scale(self, scale: str) -> tuple[float, float, float]:
        """(estimate, ci_low, ci_high) on ``"rd"``, ``"rr"`` or ``"or"``."""
        if scale == "rd":
            return (self.risk_difference, *self.rd_ci)
        if scale == "rr":
            return (self.risk_ratio, *self.rr_ci)
        if scale == "or":
            return (self.odds_ratio, *self.or_ci)
        raise ValueError(f"unknown scale {scale!r}")


def summary_from_counts(a: int, n1: int, c: int, n0: int) -> EffectSummary:
    """``a`` of ``n1`` treated and ``c`` of ``n0`` controls had the event."""
    if n1 <= 0 or n0 <= 0:
        raise ArmEmpty("both arms must be non-empty")
    p1 = a / n1
    p0 = c / n0
    rd = p1 - p0
    se_rd = math.sqrt(p1 * (1 - p1) / n1 + p0 * (1 - p0) / n0)
    b, d = n1 - a, n0 - c
    corrected = min(a, b, c, d) == 0
    if corrected:
        a_, b_, c_, d_ = a + 0.5, b + 0.5, c + 0.5, d + 0.5
    else:
        a_, b_, c_, d_ = float(a), float(b), float(c), float(d)
    m1, m0 = a_ + b_, c_ + d_
    rr = (a_ / m1) / (c_ / m0)
    se_rr = math.sqrt(1 / a_ - 1 / m1 + 1 / c_ - 1 / m0)
    odds = (a_ * d_) / (b_ * c_)
    se_or = math.sqrt(1 / a_ + 1 / b_ + 1 / c_ + 1 / d_)
    return EffectSummary(
        n1, n0, a, c, p1, p0,
        rd, (rd - Z95 * se_rd, rd + Z95 * se_rd),
        rr, (rr * math.exp(-Z95 * se_rr), rr * math.exp(Z95 * se_rr)),
        odds, (odds * math.exp(-Z95 * se_or), odds * math.exp(Z95 * se_or)),
        corrected,
    )


def effect_summary(y, t) -> EffectSummary:
    """Risks, risk difference, risk ratio and odds ratio with 95% Wald CIs.

    Ratio scales use log-normal intervals; if any 2x2 cell is empty, 0.5 is
    added to every cell for the ratio estimates and intervals, and the
    summary is flagged ``continuity_corrected``.
    """
    y = np.asarray(y)
    t = np.asarray(t)
    if y.shape != t.shape:
        raise LengthMismatch("y and t lengths differ")
    tr = t == 1
    return summary_from_counts(int(y[tr].sum()), int(tr.sum()), int(y[~tr].sum()), int((~tr).sum()))


# -- concordance for benefit -------------------------------------------------

@dataclass(frozen=True)
class MatchedPairSet:
    treated: np.ndarray
    control: np.ndarray
    predicted: np.ndarray  # mean of the two ITEs
    observed: np.ndarray  # Y_treated - Y_control in {-1, 0, 1}

    def __len__(self) -> int:
        return self.predicted.shape[0]


def match_pairs_by_ite(ite, y, t) -> MatchedPairSet:
    """Rank-sorted 1:1 matching: k-th smallest treated ITE with k-th smallest control ITE.

    The longer arm's highest-ranked patients are left unmatched.
    """
    ite = np.asarray(ite, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    t = np.asarray(t)
    tr = np.flatnonzero(t == 1)
    ct = np.flatnonzero(t == 0)
    if tr.size == 0 or ct.size == 0:
        raise ArmEmpty("both arms must be non-empty")
    tr = tr[np.argsort(ite[tr], kind="stable")]
    ct = ct[np.argsort(ite[ct], kind="stable")]
    m = min(tr.size, ct.size)
    tr, ct = tr[:m], ct[:m]
    return MatchedPairSet(tr, ct, (ite[tr] + ite[ct]) / 2.0, y[tr] - y[ct])


def concordance_counts(predicted, observed) -> tuple[int, int, int]:
    """(concordant, tied-prediction, comparable) counts over pairs with different outcomes.

    Runs in O(m log m) by comparing whole outcome classes with sorted searches.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    observed = np.asarray(observed)
    classes = np.unique(observed)
    conc = ties = comp = 0
    for i, lo in enumerate(classes):
        a = np.sort(predicted[observed == lo])
        for hi in classes[i + 1:]:
            b = predicted[observed == hi]
            below = np.searchsorted(a, b, side="left")
            upto = np.searchsorted(a, b, side="right")
            conc += int(below.sum())
            ties += int((upto - below).sum())
            comp += a.size * b.size
    return conc, ties, comp


def c_for_benefit(pairs: MatchedPairSet) -> float:
    """Share of comparable pair-of-pairs ordered the same way by predicted and
    observed benefit; ties in prediction count one half. 0.5 if none are comparable."""
    if len(pairs) < 2:
        raise TooFewPairs(f"need at least 2 matched pairs, got {len(pairs)}")
    conc, ties, comp = concordance_counts(pairs.predicted, pairs.observed)
    if comp == 0:
        return 0.5
    return (conc + 0.5 * ties) / comp


def benefit_distribution(mu0, mu1):
    """P(B=-1), P(B=0), P(B=+1) for B = Y(1) - Y(0) with independent potential outcomes."""
    mu0 = np.asarray(mu0, dtype=np.float64)
    mu1 = np.asarray(mu1, dtype=np.float64)
    p_minus = (1.0 - mu1) * mu0
    p_plus = mu1 * (1.0 - mu0)
    p_zero = mu1 * mu0 + (1.0 - mu1) * (1.0 - mu0)
    return p_minus, p_zero, p_plus


def model_based_c_for_benefit(mu0, mu1, ite=None) -> float:
    """Model-based concordance for benefit.

    For patients ordered by predicted ITE (``mu1 - mu0`` unless ``ite`` is
    given), averages ``P(B_i < B_j) + 0.5 P(B_i = B_j)`` over all pairs with
    ``ite_i < ite_j``, where each patient's benefit distribution comes from
    their own arm probabilities. Computed exactly over all pairs with prefix
    sums over the sorted ITEs. Returns 0.5 when every ITE is tied.
    """
    if mu0 is None or mu1 is None:
        raise Unavailable("model-based c-for-benefit needs arm-specific probabilities")
    mu0 = np.asarray(mu0, dtype=np.float64)
    mu1 = np.asarray(mu1, dtype=np.float64)
    if mu0.shape != mu1.shape:
        raise LengthMismatch("mu0 and mu1 lengths differ")
    tau = mu1 - mu0 if ite is None else np.asarray(ite, dtype=np.float64)
    if tau.shape != mu0.shape:
        raise LengthMismatch("mu0, mu1 and ite lengths differ")
    order = np.argsort(tau, kind="stable")
    pm, pz, pp = benefit_distribution(mu0[order], mu1[order])
    ts = tau[order]
    # group boundaries of tied ITEs
    starts = np.flatnonzero(np.concatenate([[True], ts[1:] != ts[:-1]]))
    group = np.cumsum(np.concatenate([[False], ts[1:] != ts[:-1]]))
    g_pm = np.add.reduceat(pm, starts)
    g_pz = np.add.reduceat(pz, starts)
    g_pp = np.add.reduceat(pp, starts)
    g_n = np.diff(np.append(starts, ts.size))
    # sums over strictly lower groups
    c_pm = (np.cumsum(g_pm) - g_pm)[group]
    c_pz = (np.cumsum(g_pz) - g_pz)[group]
    c_pp = (np.cumsum(g_pp) - g_pp)[group]
    c_n = (np.cumsum(g_n) - g_n)[group]
    n_pairs = float(c_n.sum())
    if n_pairs == 0:
        return 0.5
    less = c_pm * (pz + pp) + c_pz * pp
    equal = c_pm * pm + c_pz * pz + c_pp * pp
    return float((less.sum() + 0.5 * equal.sum()) / n_pairs)


# -- ITE-binned calibration ---------------------------------------------------

def ite_bins(ite, t, k_bins: int = 10) -> list[np.ndarray]:
    """Equal-count bins of the sample sorted by ITE.

    A bin missing either arm is merged into its right neighbour (the last bin
    into its left neighbour) until every bin holds both arms.
    """
    if k_bins < 2:
        raise ValueError("k_bins must be >= 2")
    ite = np.asarray(ite, dtype=np.float64)
    t = np.asarray(t)
    order = np.argsort(ite, kind="stable")
    bins = [b for b in np.array_split(order, k_bins)]

    def ok(b):
        return b.size > 0 and 0 < t[b].sum() < b.size

    while True:
        bad = [i for i, b in enumerate(bins) if not ok(b)]
        if not bad:
            break
        if len(bins) < 2:
            raise DegenerateBins("cannot form two bins containing both arms")
        i = bad[0]
        j = i + 1 if i + 1 < len(bins) else i - 1
        lo, hi = min(i, j), max(i, j)
        bins[lo:hi + 1] = [np.concatenate([bins[lo], bins[hi]])]
    if len(bins) < 2:
        raise DegenerateBins("cannot form two bins containing both arms")
    return bins


def calibration_pseudo_r2(ite, y, t, k_bins: int = 10) -> float:
    """``1 - sum n_k (ATE_k - ITE_k)^2 / sum n_k (ATE_k - ATE)^2`` over ITE bins.

    ``ATE_k`` is the observed risk difference in bin k, ``ITE_k`` the mean
    predicted ITE there and ``ATE`` the whole-sample risk difference. NaN
    when every bin has the global ATE (zero denominator).
    """
    ite = np.asarray(ite, dtype=np.float64)
    y = np.asarray(y)
    t = np.asarray(t)
    bins = ite_bins(ite, t, k_bins)
    ate = effect_summary(y, t).risk_difference
    num = den = 0.0
    for b in bins:
        ate_k = effect_summary(y[b], t[b]).risk_difference
        ite_k = _robust_mean(ite[b])
        num += b.size * (ate_k - ite_k) ** 2
        den += b.size * (ate_k - ate) ** 2
    if den == 0.0:
        return float("nan")
    return 1.0 - num / den


@dataclass(frozen=True)
class BinEffect:
    ite_low: float
    ite_high: float
    n: int
    mean_ite: float
    summary: EffectSummary


@dataclass(frozen=True)
class BinnedEffects:
    bins: tuple[BinEffect, ...]
    scale: str = "rr"

    def estimates(self, scale: str | None = None) -> np.ndarray:
        """(k, 3) array of estimate, ci_low, ci_high on ``scale``."""
        scale = scale or self.scale
        return np.array([b.summary.on_scale(scale) for b in self.bins])


def subgroup_ate_by_ite_bins(ite, y, t, k_bins: int = 10, scale: str = "rr") -> BinnedEffects:
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}")
    ite = np.asarray(ite, dtype=np.float64)
    y = np.asarray(y)
    t = np.asarray(t)
    out = []
    for b in ite_bins(ite, t, k_bins):
        vals = ite[b]
        out.append(BinEffect(float(vals.min()), float(vals.max()), int(b.size), _robust_mean(vals),
                             effect_summary(y[b], t[b])))
    return BinnedEffects(tuple(out), scale)


def benefit_harm_strata(ite, y, t) -> tuple[EffectSummary | None, EffectSummary | None]:
    """Effect summaries for the predicted-benefit (ITE < 0) and predicted-harm
    (ITE >= 0) strata; a stratum lacking either arm is None."""
    ite = np.asarray(ite, dtype=np.float64)
    y = np.asarray(y)
    t = np.asarray(t)
    res = []
    for mask in (ite < 0, ite >= 0):
        tm = t[mask]
        if tm.size == 0 or tm.sum() == 0 or tm.sum() == tm.size:
            res.append(None)
        else:
            res.append(effect_summary(y[mask], tm))
    return res[0], res[1]


# -- outcome-ITE curves and outcome prediction diagnostics --------------------

@dataclass(frozen=True)
class OutcomeCurve:
    arm: int
    grid: np.ndarray
    prob: np.ndarray
    low: np.ndarray
    high: np.ndarray
    slope: float
    slope_se: float


def outcome_ite_curves(ite, y, t, grid_size: int = 50) -> dict[int, OutcomeCurve]:
    """Per arm, logistic regression of the outcome on ITE with a 95% Wald band,
    evaluated on an evenly spaced grid over the observed ITE range."""
    ite = np.asarray(ite, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    t = np.asarray(t)
    grid = np.linspace(ite.min(), ite.max(), grid_size)
    design = np.column_stack([np.ones(grid_size), grid])
    curves = {}
    for arm in (0, 1):
        m = t == arm
        if not m.any():
            raise ArmEmpty(f"arm {arm} is empty")
        model = fit_logistic(ite[m], y[m])
        cov = model.covariance()
        eta = design @ model.coefficients
        se = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", design, cov, design), 0.0))
        curves[arm] = OutcomeCurve(arm, grid, expit(eta), expit(eta - Z95 * se),
                                   expit(eta + Z95 * se), float(model.coefficients[1]),
                                   float(math.sqrt(max(cov[1, 1], 0.0))))
    return curves


def auc(probs, y) -> float:
    """Mann-Whitney AUC with mid-ranks for ties."""
    from scipy.stats import rankdata

    probs = np.asarray(probs, dtype=np.float64)
    y = np.asarray(y)
    n1 = int((y == 1).sum())
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        raise SingleClass("AUC needs both outcome classes")
    ranks = rankdata(probs)  # average ranks, multiples of 0.5
    u = ranks[y == 1].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def roc_curve(probs, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fpr, tpr, thresholds) at every distinct predicted probability, highest first."""
    probs = np.asarray(probs, dtype=np.float64)
    y = np.asarray(y)
    order = np.argsort(-probs, kind="stable")
    ps, ys = probs[order], y[order]
    last = np.r_[np.flatnonzero(ps[1:] != ps[:-1]), ps.size - 1]
    tps = np.cumsum(ys)[last]
    fps = (last + 1) - tps
    n1 = max(int(ys.sum()), 1)
    n0 = max(ys.size - int(ys.sum()), 1)
    fpr = np.r_[0.0, fps / n0]
    tpr = np.r_[0.0, tps / n1]
    return fpr, tpr, np.r_[np.inf, ps[last]]


@dataclass(frozen=True)
class CalibrationBin:
    mean_predicted: float
    observed_rate: float
    n: int


def calibration_table(probs, y, n_bins: int = 10) -> list[CalibrationBin]:
    """Up to ``n_bins`` equal-count bins of predicted probability; tied
    quantile edges collapse, so constant predictions give a single bin."""
    probs = np.asarray(probs, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    edges = np.unique(np.quantile(probs, np.linspace(0, 1, n_bins + 1)))
    which = np.searchsorted(edges[1:-1], probs, side="right")
    out = []
    for k in range(len(edges) - 1 if len(edges) > 1 else 1):
        m = which == k
        if m.any():
            out.append(CalibrationBin(_robust_mean(probs[m]), float(y[m].mean()), int(m.sum())))
    return out


def outcome_prediction_diagnostics(probs, y) -> tuple[float | None, list[CalibrationBin]]:
    """(AUC or None when only one class is present, calibration table)."""
    probs = np.asarray(probs, dtype=np.float64)
    if np.any((probs < 0) | (probs > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    try:
        a = auc(probs, y)
    except SingleClass:
        a = None
    return a, calibration_table(probs, y)


def pehe(ite_hat, ite_true) -> float:
    """Root mean squared error between estimated and true ITEs."""
    a = np.asarray(ite_hat, dtype=np.float64)
    b = np.asarray(ite_true, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(f"lengths differ: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


# -- full report ----------------------------------------------------------------

@dataclass
class MetricReport:
    """Everything computed for one (model, partition) pair. ``None`` marks an
    unavailable metric; ``unavailable`` records why."""

    n: int
    c_for_benefit: float | None
    mbc: float | None
    pseudo_r2: float | None
    bins: BinnedEffects | None
    benefit: EffectSummary | None
    harm: EffectSummary | None
    curves: dict[int, OutcomeCurve] | None
    auc: dict[int, float | None] = field(default_factory=dict)
    calibration: dict[int, list[CalibrationBin]] = field(default_factory=dict)
    roc: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=dict)
    unavailable: dict[str, str] = field(default_factory=dict)


def compute_report(ite, y, t, arm_probs=None, k_bins: int = 10, scale: str = "rr",
                   grid_size: int = 50) -> MetricReport:
    ite = np.asarray(ite, dtype=np.float64)
    y = np.asarray(y)
    t = np.asarray(t)
    why: dict[str, str] = {}

    def attempt(name, fn):
        try:
            v = fn()
        except HteError as exc:
            why[name] = f"{type(exc).__name__}: {exc}"
            return None
        if isinstance(v, float) and not math.isfinite(v):
            why[name] = "undefined (zero denominator)"
            return None
        return v

    cfb = attempt("c_for_benefit", lambda: c_for_benefit(match_pairs_by_ite(ite, y, t)))
    if arm_probs is None:
        why["mbc"] = "estimator does not expose arm-specific outcome probabilities"
        mbc = None
    else:
        mu0, mu1 = arm_probs
        mbc = attempt("mbc", lambda: model_based_c_for_benefit(mu0, mu1, ite))
    r2 = attempt("pseudo_r2", lambda: calibration_pseudo_r2(ite, y, t, k_bins))
    bins = attempt("subgroups", lambda: subgroup_ate_by_ite_bins(ite, y, t, k_bins, scale))
    benefit, harm = benefit_harm_strata(ite, y, t)
    if benefit is None:
        why["benefit"] = "stratum ITE < 0 lacks a treatment arm"
    if harm is None:
        why["harm"] = "stratum ITE >= 0 lacks a treatment arm"
    curves = attempt("curves", lambda: outcome_ite_curves(ite, y, t, grid_size))
    report = MetricReport(len(ite), cfb, mbc, r2, bins, benefit, harm, curves, unavailable=why)
    if arm_probs is not None:
        mu0, mu1 = (np.asarray(v, dtype=np.float64) for v in arm_probs)
        for arm, mu in ((0, mu0), (1, mu1)):
            m = t == arm
            a, cal = outcome_prediction_diagnostics(mu[m], y[m])
            report.auc[arm] = a
            report.calibration[arm] = cal
            if a is not None:
                report.roc[arm] = roc_curve(mu[m], y[m])
    return report
