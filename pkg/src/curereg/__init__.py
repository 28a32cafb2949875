"""Cure regression via inverse-probability-of-censoring weighting."""

from .exceptions import (
    CureRegError,
    ConfigError,
    DataError,
    ConvergenceError,
)
from .data import (
    Subject,
    SurvivalDataset,
    Standardization,
    load_csv,
    standardize,
    destandardize_coefficients,
)
from .censoring import (
    SURVIVOR_FLOOR,
    LOW_OVERLAP_THRESHOLD,
    LowOverlapWarning,
    CensoringModel,
    KaplanMeierCensoring,
    CoxCensoring,
    BeranConfig,
    BeranCensoring,
    KnownCensoring,
    fit_km_censoring,
    fit_cox_censoring,
    fit_beran_censoring,
    fit_censoring,
)
from .mle import (
    SyntheticIndicators,
    CureFit,
    synthetic_indicators,
    cure_loglik,
    cure_score,
    cure_hessian,
    fit_cure,
)
from .penalty import (
    PenaltyConfig,
    PenalizedFit,
    PenaltyPath,
    SelectionMetrics,
    smooth_abs,
    adaptive_weights,
    fit_penalized,
    make_folds,
    cve,
    lambda_path,
    selection_metrics,
)
from .bootstrap import BootstrapResult, bootstrap
from .simulation import (
    SimScenario,
    EstimatorConfig,
    SimReport,
    truncated_weibull_inverse,
    calibrate_tau,
    calibrate_censoring_intercept,
    make_scenario,
    draw_dataset,
    run_study,
)

__version__ = "0.1.0"

__all__ = [
    "CureRegError", "ConfigError", "DataError", "ConvergenceError",
    "Subject", "SurvivalDataset", "Standardization", "load_csv",
    "standardize", "destandardize_coefficients",
    "SURVIVOR_FLOOR", "LOW_OVERLAP_THRESHOLD", "LowOverlapWarning",
    "CensoringModel", "KaplanMeierCensoring", "CoxCensoring", "BeranConfig",
    "BeranCensoring", "KnownCensoring", "fit_km_censoring",
    "fit_cox_censoring", "fit_beran_censoring", "fit_censoring",
    "SyntheticIndicators", "CureFit", "synthetic_indicators", "cure_loglik",
    "cure_score", "cure_hessian", "fit_cure",
    "PenaltyConfig", "PenalizedFit", "PenaltyPath", "SelectionMetrics",
    "smooth_abs", "adaptive_weights", "fit_penalized", "make_folds", "cve",
    "lambda_path", "selection_metrics",
    "BootstrapResult", "bootstrap",
    "SimScenario", "EstimatorConfig", "SimReport",
    "truncated_weibull_inverse", "calibrate_tau",
    "calibrate_censoring_intercept", "make_scenario", "draw_dataset",
    "run_study",
    "__version__",
]
