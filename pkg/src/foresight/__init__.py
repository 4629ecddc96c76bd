"""Pricing toolkit for the value of selling at the best price seen in a fixed
trailing window: closed forms under an exponential horizon, simulable
threshold rules, and Monte Carlo lower/upper bounds for the finite-horizon
Bermudan problem, cross-checked by brute-force oracles."""

from .analytic import (
    ExcursionRates,
    FormulaParams,
    NumericalDegeneracyError,
    ThresholdSearchError,
    ThresholdSolution,
    a_quantities,
    excursion_rates,
    lambda_max,
    normal_cdf,
    normal_pdf,
    optimal_threshold,
    psi,
    rule_value,
)
from .bounds import (
    BinModel,
    BoundEstimate,
    DegenerateBinningError,
    build_bin_model,
    lower_bound,
    upper_bound,
)
from .oracle import (
    ExcursionStats,
    TreeSpec,
    exact_foresight_value,
    exact_small_value,
    mc_exp_window_max,
    mc_excursion_stats,
    nonsemimartingale_demo,
)
from .paths import (
    ModelParams,
    PathGrid,
    RngStream,
    TwoPointIncrements,
    detect_tau0,
    rolling_window_max,
    simulate_path,
)
from .rules import (
    QStarTable,
    RuleConfig,
    RuleEstimate,
    run_rule,
    threshold,
)

__version__ = "0.1.0"

__all__ = [
    "BinModel",
    "BoundEstimate",
    "DegenerateBinningError",
    "ExcursionRates",
    "ExcursionStats",
    "FormulaParams",
    "ModelParams",
    "NumericalDegeneracyError",
    "PathGrid",
    "QStarTable",
    "RngStream",
    "RuleConfig",
    "RuleEstimate",
    "ThresholdSearchError",
    "ThresholdSolution",
    "TreeSpec",
    "TwoPointIncrements",
    "a_quantities",
    "build_bin_model",
    "detect_tau0",
    "exact_foresight_value",
    "exact_small_value",
    "excursion_rates",
    "lambda_max",
    "lower_bound",
    "mc_exp_window_max",
    "mc_excursion_stats",
    "nonsemimartingale_demo",
    "normal_cdf",
    "normal_pdf",
    "optimal_threshold",
    "psi",
    "rolling_window_max",
    "rule_value",
    "run_rule",
    "simulate_path",
    "threshold",
    "upper_bound",
]
