"""Internal (random, geographic, combined) and external validation runs.

Every stochastic step draws from a seed derived from the master seed plus
labels (replicate, estimator), never from a shared stream, so results do not
depend on thread count, task order, or which other estimators are in the plan.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .data import SplitAssignment, TrialDataset, geographic_split, merge, random_split
from .errors import ConfigInvalid, SchemaMismatch
from .estimators import EstimatorSpec, parse_estimator
from .metrics import MetricReport, compute_report
from .rng import derive_seed

QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)


class Mode(Enum):
    INTERNAL_RANDOM = "internal_random"
    INTERNAL_GEOGRAPHIC = "internal_geographic"
    INTERNAL_COMBINED = "internal_combined"
    EXTERNAL = "external"


@dataclass(frozen=True)
class ValidationPlan:
    mode: Mode
    datasets: tuple[TrialDataset, ...]
    estimators: tuple[EstimatorSpec, ...]
    train_fraction: float = 2 / 3
    replicates: int = 1
    k_bins: int = 10
    seed: int = 0
    train_regions: tuple[str, ...] | None = None
    scale: str = "rr"
    grid_size: int = 50

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "datasets", tuple(self.datasets))
        object.__setattr__(self, "estimators", tuple(parse_estimator(e) for e in self.estimators))
        if self.replicates < 1:
            raise ConfigInvalid("replicates must be >= 1")
        if not self.datasets:
            raise ConfigInvalid("at least one dataset is required")
        if self.mode is Mode.EXTERNAL and len(self.datasets) != 2:
            raise ConfigInvalid("external validation needs exactly 2 datasets")
        if self.mode in (Mode.INTERNAL_RANDOM, Mode.INTERNAL_GEOGRAPHIC) and len(self.datasets) != 1:
            raise ConfigInvalid(f"{self.mode.value} takes exactly 1 dataset")
        if self.mode is Mode.INTERNAL_GEOGRAPHIC and not self.train_regions:
            raise ConfigInvalid("internal_geographic needs train_regions")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigInvalid("train_fraction must lie in (0, 1)")
        if self.k_bins < 2:
            raise ConfigInvalid("k_bins must be >= 2")
        names = [e.display for e in self.estimators]
        if len(set(names)) != len(names):
            raise ConfigInvalid("estimator labels must be unique")

    def replicates_for(self, spec: EstimatorSpec) -> int:
        if self.mode is Mode.EXTERNAL:
            return 2  # the two directions
        return spec.replicates or self.replicates


@dataclass
class RunResult:
    estimator: str
    replicate: int
    split_id: str
    train: MetricReport | None
    test: MetricReport | None
    ite_train: np.ndarray | None
    ite_test: np.ndarray | None
    train_indices: np.ndarray | None = None
    test_indices: np.ndarray | None = None
    error: str | None = None
    seconds: float = 0.0
    exception: BaseException | None = field(default=None, repr=False, compare=False)

    @property
    def available(self) -> bool:
        return self.error is None


def thread_count() -> int:
    raw = os.environ.get("HTE_THREADS", "0").strip() or "0"
    try:
        k = int(raw)
    except ValueError:
        raise ConfigInvalid(f"HTE_THREADS must be an integer, got {raw!r}") from None
    if k < 0:
        raise ConfigInvalid("HTE_THREADS must be >= 0")
    return k if k > 0 else (os.cpu_count() or 1)


def fit_seed(master: int, replicate: int, name: str) -> int:
    return derive_seed(master, "fit", replicate, name)


def split_seed(master: int, replicate: int) -> int:
    return derive_seed(master, "split", replicate)


def evaluate(spec: EstimatorSpec, train: TrialDataset, test: TrialDataset, seed: int,
             k_bins: int = 10, scale: str = "rr", grid_size: int = 50):
    """Fit on ``train`` and score on both partitions: ``(train_report, test_report, ite_train, ite_test)``."""
    model = spec.fit(train, seed)
    reports = []
    ites = []
    for part in (train, test):
        ite = np.asarray(model.predict_ite(part.covariates), dtype=np.float64)
        if ite.shape != (part.n,) or not np.all(np.isfinite(ite)):
            raise FloatingPointError(f"{spec.display}: non-finite or misshaped ITE predictions")
        reports.append(compute_report(ite, part.outcome, part.treatment, model.arm_probs(part.covariates),
                                      k_bins=k_bins, scale=scale, grid_size=grid_size))
        ites.append(ite)
    return reports[0], reports[1], ites[0], ites[1]


def _run_one(plan: ValidationPlan, spec: EstimatorSpec, replicate: int, split_id: str,
             train: TrialDataset, test: TrialDataset, tr_idx, te_idx) -> RunResult:
    start = time.perf_counter()
    try:
        rtr, rte, itr, ite = evaluate(spec, train, test, fit_seed(plan.seed, replicate, spec.display),
                                      plan.k_bins, plan.scale, plan.grid_size)
    except Exception as exc:  # noqa: BLE001 - any estimator failure becomes an unavailable row
        return RunResult(spec.display, replicate, split_id, None, None, None, None, tr_idx, te_idx,
                         f"{type(exc).__name__}: {exc}", time.perf_counter() - start, exc)
    return RunResult(spec.display, replicate, split_id, rtr, rte, itr, ite, tr_idx, te_idx, None,
                     time.perf_counter() - start)


def _pool_map(fn, tasks):
    k = min(thread_count(), max(len(tasks), 1))
    if k <= 1:
        return [fn(*t) for t in tasks]
    with ThreadPoolExecutor(max_workers=k) as pool:
        return list(pool.map(lambda t: fn(*t), tasks))


def internal_split(plan: ValidationPlan, replicate: int) -> tuple[TrialDataset, SplitAssignment]:
    if plan.mode is Mode.INTERNAL_GEOGRAPHIC:
        data = plan.datasets[0]
        return data, geographic_split(data, plan.train_regions)
    data = merge(plan.datasets) if plan.mode is Mode.INTERNAL_COMBINED else plan.datasets[0]
    return data, random_split(data, plan.train_fraction, split_seed(plan.seed, replicate))


def run_internal(plan: ValidationPlan) -> list[RunResult]:
    """One result per (estimator, replicate), ordered as in the plan."""
    if plan.mode is Mode.EXTERNAL:
        raise ConfigInvalid("run_internal needs an internal mode")
    n_rep = max(plan.replicates_for(s) for s in plan.estimators)
    splits = {}
    for r in range(n_rep):
        data, sa = internal_split(plan, r)
        splits[r] = (data.subset(sa.train_indices), data.subset(sa.test_indices),
                     sa.train_indices, sa.test_indices)
    tasks = [(plan, spec, r, f"split{r}", *splits[r])
             for spec in plan.estimators for r in range(plan.replicates_for(spec))]
    return _pool_map(_run_one, tasks)


def check_harmonized(a: TrialDataset, b: TrialDataset):
    if tuple(a.feature_names) != tuple(b.feature_names):
        raise SchemaMismatch(f"feature sets differ: {a.feature_names} vs {b.feature_names}")


def run_external(plan: ValidationPlan) -> list[RunResult]:
    """Train on all of A and test on all of B, then the reverse."""
    if plan.mode is not Mode.EXTERNAL:
        raise ConfigInvalid("run_external needs mode external")
    a, b = plan.datasets
    check_harmonized(a, b)
    la = a.source_label or "A"
    lb = b.source_label or "B"
    if la == lb:
        la, lb = la + "#1", lb + "#2"
    passes = [(a, b, f"{la}->{lb}"), (b, a, f"{lb}->{la}")]
    tasks = [(plan, spec, r, sid, tr, te, None, None)
             for spec in plan.estimators for r, (tr, te, sid) in enumerate(passes)]
    return _pool_map(_run_one, tasks)


def run_plan(plan: ValidationPlan) -> list[RunResult]:
    return run_external(plan) if plan.mode is Mode.EXTERNAL else run_internal(plan)


@dataclass
class StrataDistribution:
    """Replicate-level stratum risk differences (NaN where a stratum was unavailable)."""

    train_benefit: np.ndarray
    train_harm: np.ndarray
    test_benefit: np.ndarray
    test_harm: np.ndarray

    def quantiles(self) -> dict[str, dict[float, float]]:
        out = {}
        for key in ("train_benefit", "train_harm", "test_benefit", "test_harm"):
            v = getattr(self, key)
            v = v[np.isfinite(v)]
            out[key] = {q: (float(np.quantile(v, q)) if v.size else float("nan")) for q in QUANTILES}
        return out


@dataclass
class AggregateResult:
    per_estimator: dict[str, StrataDistribution] = field(default_factory=dict)

    def quantiles(self) -> dict[str, dict[str, dict[float, float]]]:
        return {k: v.quantiles() for k, v in self.per_estimator.items()}


def _stratum_rd(report: MetricReport | None, which: str) -> float:
    if report is None:
        return float("nan")
    s = getattr(report, which)
    return float("nan") if s is None else s.risk_difference


def aggregate(results: Sequence[RunResult]) -> AggregateResult:
    """Collect benefit/harm stratum risk differences per estimator across replicates."""
    groups: dict[str, list[RunResult]] = {}
    for r in results:
        groups.setdefault(r.estimator, []).append(r)
    agg = AggregateResult()
    for name, rs in groups.items():
        rs = sorted(rs, key=lambda r: r.replicate)
        agg.per_estimator[name] = StrataDistribution(
            *(np.array([_stratum_rd(getattr(r, part), which) for r in rs])
              for part in ("train", "test") for which in ("benefit", "harm")))
    return agg
