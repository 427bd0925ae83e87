"""crowdsig: crowd size signature plots for panels of forecast errors.

Compute the MSE of k-average forecasts as a function of crowd size k --
exactly, by Monte Carlo subset sampling, or in closed form from sample
moments -- and fit the equicorrelation model whose curve reproduces the
direct plot.
"""

__version__ = "0.1.0"

from .equicorr import (
    EquicorrParams,
    build_equicorr_matrix,
    equicorr_domain,
    invert_equicorr,
    model_dmse,
    model_dmse_ratio,
    model_mse,
    model_mse_ratio,
    optimal_weights,
    weak_equicorr_weights,
)
from .estimator import (
    BootstrapResult,
    MatchEstimate,
    ProfileCoefficients,
    bootstrap_se,
    closed_form_estimate,
    matching_estimate,
    objective_q,
    profile_sigma2,
    with_bootstrap_se,
)
from .factor import (
    BIN_LABELS,
    DeviationGrid,
    ImpliedMoments,
    RestrictionCheck,
    check_restrictions,
    deviation_grid,
    implied_moments,
)
from .panel import (
    ColumnLayout,
    CovarianceSummary,
    ErrorPanel,
    FactorParams,
    ForecastPanel,
    LevelPanel,
    PanelSummary,
    RealizationSeries,
    compute_errors,
    extract_balanced,
    levels_to_growth,
    load_realizations,
    load_spf_levels,
    loads_spf_levels,
    participation_summary,
    period_index,
    period_label,
    sample_moments,
    simulate_equicorrelated,
    simulate_factor,
)
from .sigplot import (
    DistributionPlot,
    MonteCarloConfig,
    SignaturePlot,
    model_plot,
    mse_closed_form,
    mse_exact,
    mse_monte_carlo,
    squared_error_distribution,
    to_dmse,
    to_ratio,
)

__all__ = [
    "__version__",
    # panel
    "ColumnLayout", "CovarianceSummary", "ErrorPanel", "FactorParams",
    "ForecastPanel", "LevelPanel", "PanelSummary", "RealizationSeries",
    "compute_errors", "extract_balanced", "levels_to_growth",
    "load_realizations", "load_spf_levels", "loads_spf_levels",
    "participation_summary", "period_index", "period_label",
    "sample_moments", "simulate_equicorrelated", "simulate_factor",
    # sigplot
    "DistributionPlot", "MonteCarloConfig", "SignaturePlot", "model_plot",
    "mse_closed_form", "mse_exact", "mse_monte_carlo",
    "squared_error_distribution", "to_dmse", "to_ratio",
    # equicorr
    "EquicorrParams", "build_equicorr_matrix", "equicorr_domain",
    "invert_equicorr", "model_dmse", "model_dmse_ratio", "model_mse",
    "model_mse_ratio", "optimal_weights", "weak_equicorr_weights",
    # estimator
    "BootstrapResult", "MatchEstimate", "ProfileCoefficients",
    "bootstrap_se", "closed_form_estimate", "matching_estimate",
    "objective_q", "profile_sigma2", "with_bootstrap_se",
    # factor
    "BIN_LABELS", "DeviationGrid", "ImpliedMoments", "RestrictionCheck",
    "check_restrictions", "deviation_grid", "implied_moments",
]
