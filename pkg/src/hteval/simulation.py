"""Synthetic trials with a known individualized treatment effect.

Outcome log-odds are ``eta = beta0 + beta.x`` under control and
``eta + delta`` under treatment, with ``delta = gamma0 + gamma.x``; the true
ITE is ``expit(eta + delta) - expit(eta)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import pearsonr, spearmanr

from .data import TrialDataset
from .errors import ConfigInvalid
from .estimators import EstimatorSpec, FixedPredictions
from .metrics import pehe
from .rng import derive_seed, make_rng

PRESETS = ("I", "II", "III")
BETA0 = -0.5
GAMMA0 = -0.3
BETA_PATTERN = (0.5, -0.5, 0.4, -0.4, 0.3, -0.3, 0.2, -0.2, 0.1, -0.1)
GAMMA_PATTERN = (0.6, -0.6, 0.4, -0.4)


def _pad(pattern, p):
    out = np.zeros(p)
    k = min(p, len(pattern))
    out[:k] = pattern[:k]
    return out


@dataclass(frozen=True)
class DgpConfig:
    n: int
    p_continuous: int
    p_discrete: int
    beta0: float
    beta: tuple[float, ...]
    gamma0: float
    gamma: tuple[float, ...]
    e: float = 0.5
    visible_features: tuple[int, ...] | None = None
    discrete_features: tuple[int, ...] | None = None  # default: the last p_discrete columns
    seed: int = 0

    def __post_init__(self):
        p = self.p
        if self.n < 2:
            raise ConfigInvalid("n must be >= 2")
        if len(self.beta) != p or len(self.gamma) != p:
            raise ConfigInvalid(f"beta and gamma must have length p = {p}")
        if not 0.0 < self.e < 1.0:
            raise ConfigInvalid("treatment probability must lie in (0, 1)")
        disc = self.discrete_indices
        if len(disc) != self.p_discrete or len(set(disc)) != len(disc) or any(not 0 <= j < p for j in disc):
            raise ConfigInvalid("discrete_features must list p_discrete distinct column indices")
        if self.visible_features is not None:
            vis = self.visible_features
            if not vis or len(set(vis)) != len(vis) or any(not 0 <= j < p for j in vis):
                raise ConfigInvalid("visible_features must be distinct column indices")

    @property
    def p(self) -> int:
        return self.p_continuous + self.p_discrete

    @property
    def discrete_indices(self) -> tuple[int, ...]:
        if self.discrete_features is not None:
            return tuple(self.discrete_features)
        return tuple(range(self.p_continuous, self.p))

    def to_dict(self) -> dict:
        return {
            "n": self.n, "p_continuous": self.p_continuous, "p_discrete": self.p_discrete,
            "beta0": self.beta0, "beta": list(self.beta), "gamma0": self.gamma0,
            "gamma": list(self.gamma), "e": self.e,
            "visible_features": None if self.visible_features is None else list(self.visible_features),
            "discrete_features": list(self.discrete_indices), "seed": self.seed,
        }


@dataclass(frozen=True)
class SimulatedTrial:
    data: TrialDataset
    true_ite: np.ndarray
    full_covariates: np.ndarray
    config: DgpConfig


def linear_predictors(config: DgpConfig, X) -> tuple[np.ndarray, np.ndarray]:
    """(eta, delta) for a full covariate matrix."""
    X = np.asarray(X, dtype=np.float64)
    return config.beta0 + X @ np.asarray(config.beta), config.gamma0 + X @ np.asarray(config.gamma)


def true_ite(config: DgpConfig, X) -> np.ndarray:
    eta, delta = linear_predictors(config, X)
    return expit(eta + delta) - expit(eta)


def generate(config: DgpConfig) -> SimulatedTrial:
    """Draw covariates, treatment and outcome; deterministic in ``config.seed``."""
    rng = make_rng(config.seed)
    n, p = config.n, config.p
    disc = np.zeros(p, dtype=bool)
    disc[list(config.discrete_indices)] = True
    X = np.empty((n, p))
    X[:, ~disc] = rng.standard_normal((n, int((~disc).sum())))
    X[:, disc] = rng.integers(0, 2, size=(n, int(disc.sum())))
    t = (rng.random(n) < config.e).astype(np.int8)
    eta, delta = linear_predictors(config, X)
    y = (rng.random(n) < expit(eta + t * delta)).astype(np.int8)
    ite = expit(eta + delta) - expit(eta)
    names = tuple(f"x{j + 1}" for j in range(p))
    vis = list(range(p)) if config.visible_features is None else list(config.visible_features)
    data = TrialDataset(X[:, vis], t, y, tuple(names[j] for j in vis),
                        source_label=f"sim{config.seed}")
    X.setflags(write=False)
    ite.setflags(write=False)
    return SimulatedTrial(data, ite, X, config)


def setting(preset: str, n: int = 20000, seed: int = 0) -> DgpConfig:
    """Frozen coefficient presets.

    I: 20 continuous covariates. II: as I but only the 6 covariates with the
    smallest ``|beta_j| + |gamma_j|`` are observed. III: 10 continuous and 10
    binary covariates, alternating so both kinds carry outcome and effect signal.
    """
    if preset not in PRESETS:
        raise ConfigInvalid(f"preset must be one of {PRESETS}, got {preset!r}")
    if n < 100:
        raise ConfigInvalid("n must be >= 100")
    p = 20
    beta = _pad(BETA_PATTERN, p)
    gamma = _pad(GAMMA_PATTERN, p)
    common = dict(n=n, beta0=BETA0, beta=tuple(beta), gamma0=GAMMA0, gamma=tuple(gamma), seed=seed)
    if preset == "I":
        return DgpConfig(p_continuous=p, p_discrete=0, **common)
    if preset == "II":
        weight = np.abs(beta) + np.abs(gamma)
        visible = tuple(sorted(int(j) for j in np.argsort(weight, kind="stable")[:6]))
        return DgpConfig(p_continuous=p, p_discrete=0, visible_features=visible, **common)
    return DgpConfig(p_continuous=10, p_discrete=10, discrete_features=tuple(range(1, p, 2)), **common)


def null_setting(n: int = 20000, seed: int = 0) -> DgpConfig:
    """Setting I coefficients with no treatment effect at all."""
    base = setting("I", n, seed)
    return DgpConfig(base.n, base.p_continuous, 0, base.beta0, base.beta, 0.0,
                     (0.0,) * base.p, seed=seed)


@dataclass(frozen=True)
class OracleSpec(EstimatorSpec):
    """Estimator spec that ignores the training data and predicts the true ITE."""

    config: DgpConfig | None = None

    def _validate(self):
        if self.config is None:
            raise ConfigInvalid("oracle estimator needs a DgpConfig")
        if self.config.visible_features is not None:
            raise ConfigInvalid("oracle estimator needs every covariate visible")

    def fit(self, data: TrialDataset, seed: int):
        cfg = self.config

        def probs(X):
            eta, delta = linear_predictors(cfg, X)
            return expit(eta), expit(eta + delta)

        return FixedPredictions(lambda X: true_ite(cfg, X), probs)


def oracle_estimator(config: DgpConfig, label: str = "oracle") -> OracleSpec:
    return OracleSpec("oracle", label=label, config=config)


@dataclass
class OracleRow:
    preset: str
    estimator: str
    replicate: int
    available: bool
    pehe: float | None = None
    pearson: float | None = None
    spearman: float | None = None
    cfb_train: float | None = None
    cfb_test: float | None = None
    pseudo_r2_train: float | None = None
    pseudo_r2_test: float | None = None


@dataclass
class SimulationStudy:
    rows: list[OracleRow] = field(default_factory=list)
    # (preset, estimator, replicate) -> (true ITE, estimated ITE) on the test rows
    scatter: dict[tuple[str, str, int], tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    results: dict[str, list] = field(default_factory=dict)

    def row(self, preset: str, estimator: str, replicate: int = 0) -> OracleRow:
        for r in self.rows:
            if (r.preset, r.estimator, r.replicate) == (preset, estimator, replicate):
                return r
        raise KeyError((preset, estimator, replicate))


def _corr(fn, a, b):
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return 0.0
    return float(fn(a, b)[0])


def run_simulation_study(presets: Sequence[str], estimators, replicates: int = 1, seed: int = 0,
                         n: int = 20000, k_bins: int = 10, configs: dict | None = None,
                         fresh_trials: bool = False) -> SimulationStudy:
    """Internal 2:1 validation on each preset's trial plus oracle columns on the test rows.

    By default every replicate re-splits one trial per preset; with
    ``fresh_trials`` each replicate draws a new trial from the same DGP. Note
    that re-splitting a single finite trial couples train and test (chance
    events missing from one half sit in the other), which shows up as a small
    anti-correlation between training-set overfit and test outcomes.
    ``configs`` may map extra preset labels to DgpConfigs (e.g. a null DGP).
    """
    from .validation import Mode, ValidationPlan, run_internal

    study = SimulationStudy()
    for preset in presets:
        if configs and preset in configs:
            base = configs[preset]
        else:
            base = setting(preset, n, derive_seed(seed, "trial", preset))
        if fresh_trials:
            draws = [(replace(base, seed=derive_seed(base.seed, "replicate", r)), 1,
                      derive_seed(seed, "plan", preset, r), r) for r in range(replicates)]
        else:
            draws = [(base, replicates, derive_seed(seed, "plan", preset), 0)]
        study.results[preset] = []
        for cfg, reps, plan_seed, offset in draws:
            trial = generate(cfg)
            plan = ValidationPlan(Mode.INTERNAL_RANDOM, (trial.data,), tuple(estimators),
                                  replicates=reps, k_bins=k_bins, seed=plan_seed)
            for res in run_internal(plan):
                res.replicate += offset
                study.results[preset].append(res)
                study.rows.append(_oracle_row(study, preset, trial, res))
    return study


def _oracle_row(study: SimulationStudy, preset: str, trial: SimulatedTrial, res) -> OracleRow:
    row = OracleRow(preset, res.estimator, res.replicate, res.available)
    if res.available:
        truth = trial.true_ite[res.test_indices]
        row.pehe = pehe(res.ite_test, truth)
        row.pearson = _corr(pearsonr, res.ite_test, truth)
        row.spearman = _corr(spearmanr, res.ite_test, truth)
        row.cfb_train = res.train.c_for_benefit
        row.cfb_test = res.test.c_for_benefit
        row.pseudo_r2_train = res.train.pseudo_r2
        row.pseudo_r2_test = res.test.pseudo_r2
        study.scatter[(preset, res.estimator, res.replicate)] = (truth, res.ite_test)
    return row
