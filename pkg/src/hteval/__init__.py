"""Individualized treatment effect estimation and validation for randomized trials."""

__version__ = "0.1.0"

from .causal_forest import CausalForestModel, fit_causal_forest, predict_tau
from .data import (
    ColumnMapping,
    Covariate,
    SplitAssignment,
    TrialDataset,
    geographic_split,
    harmonize,
    load_csv_dataset,
    merge,
    random_split,
)
from .estimators import EstimatorSpec, registered_names
from .metalearners import fit_dr_learner, fit_s_learner, fit_t_learner, fit_x_learner
from .metrics import (
    MetricReport,
    c_for_benefit,
    calibration_pseudo_r2,
    compute_report,
    effect_summary,
    match_pairs_by_ite,
    model_based_c_for_benefit,
    pehe,
)
from .simulation import DgpConfig, generate, run_simulation_study, setting
from .validation import Mode, ValidationPlan, aggregate, run_external, run_internal

__all__ = [
    "CausalForestModel", "ColumnMapping", "Covariate", "DgpConfig", "EstimatorSpec",
    "MetricReport", "Mode", "SplitAssignment", "TrialDataset", "ValidationPlan", "aggregate",
    "c_for_benefit", "calibration_pseudo_r2", "compute_report", "effect_summary",
    "fit_causal_forest", "fit_dr_learner", "fit_s_learner", "fit_t_learner", "fit_x_learner",
    "generate", "geographic_split", "harmonize", "load_csv_dataset", "match_pairs_by_ite",
    "merge", "model_based_c_for_benefit", "pehe", "predict_tau", "random_split",
    "registered_names", "run_external", "run_internal", "run_simulation_study", "setting",
]
