"""Single-factor error structures and equicorrelation diagnostics.

Maps factor-model parameters to the moments they imply for forecast errors,
tests the parameter restrictions under which those moments collapse to
common-correlation structures, and grades observed moment matrices by their
percent deviation from class medians.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, IncompleteMomentsError

BIN_LABELS = ("under10", "b10to20", "b20to30", "over30")
_BIN_EDGES = (10.0, 20.0, 30.0)


@dataclass(frozen=True)
class ImpliedMoments:
    """Error moments implied by factor parameters.

    var_factor is the stationary factor variance shock_var / (1 - phi^2);
    variances[i] = loading_i^2 * var_factor + idio_var_i; the correlation of
    a pair is loading_i loading_j var_factor / (sigma_i sigma_j).
    """

    var_factor: float
    variances: np.ndarray
    correlation: np.ndarray


class RestrictionCheck(NamedTuple):
    weak: bool
    strong: bool


@dataclass(frozen=True)
class DeviationGrid:
    """Percent deviations of each moment from its class median.

    Variances are compared to the median variance, covariances to the median
    covariance; ``deviation_pct`` is signed, bins partition the absolute
    deviation at 10/20/30 percent.  ``bins`` holds indexes into
    ``BIN_LABELS``.
    """

    forecaster_ids: np.ndarray
    values: np.ndarray          # (N, N): variances on diagonal, covariances off
    deviation_pct: np.ndarray   # (N, N) signed percent deviations
    bins: np.ndarray            # (N, N) int codes into BIN_LABELS
    median_variance: float
    median_covariance: float

    def bin_label(self, i, j):
        return BIN_LABELS[int(self.bins[i, j])]


def implied_moments(params):
    """Forecast-error variances and correlations implied by the factor model."""
    var_z = params.shock_var / (1.0 - params.ar_coef ** 2)
    variances = params.loadings ** 2 * var_z + params.idio_vars
    sd = np.sqrt(variances)
    corr = (params.loadings[:, np.newaxis] * params.loadings[np.newaxis, :] * var_z) / (
        sd[:, np.newaxis] * sd[np.newaxis, :]
    )
    np.fill_diagonal(corr, 1.0)
    return ImpliedMoments(var_factor=float(var_z), variances=variances, correlation=corr)


def _relative_spread(x):
    x = np.asarray(x, dtype=np.float64)
    scale = np.max(np.abs(x))
    if scale == 0:
        return 0.0
    return float((np.max(x) - np.min(x)) / scale)


def check_restrictions(params, tol=1e-9):
    """Test the restrictions that make implied moments equicorrelated.

    weak: the ratios idio_var_i / loading_i^2 agree for all i, which makes
    every pairwise correlation identical while variances may differ.
    strong: loadings and idiosyncratic variances are themselves constant,
    which additionally equalizes the variances.  strong implies weak.
    """
    if (params.loadings == 0).any():
        raise DomainError("weak restriction check undefined when a loading is zero")
    ratios = params.idio_vars / params.loadings ** 2
    weak = _relative_spread(ratios) <= tol
    strong = (
        _relative_spread(params.loadings) <= tol
        and _relative_spread(params.idio_vars) <= tol
    )
    return RestrictionCheck(weak=weak, strong=strong)


def _bin_code(abs_dev):
    return int(np.searchsorted(_BIN_EDGES, abs_dev, side="right"))


def deviation_grid(moments):
    """Grade a moment matrix by percent deviation from class medians.

    Each variance is compared to the median of all variances and each
    covariance to the median of all covariances:
    deviation = 100 * (value - median) / |median|, binned on its absolute
    value at 10/20/30 percent.  The median of an even count is the mean of
    the central order statistics.
    """
    n = moments.n
    if n < 2:
        raise DomainError("deviation grid needs at least two forecasters")
    pv = moments.pair_values
    if np.isnan(pv).any():
        raise IncompleteMomentsError("deviation grid needs every pairwise covariance")
    med_var = float(np.median(moments.variances))
    med_cov = float(np.median(pv))
    if med_var == 0 or med_cov == 0:
        raise DomainError("a class median is zero; percent deviations undefined")

    values = np.array(moments.cov)
    medians = np.full((n, n), med_cov)
    np.fill_diagonal(medians, med_var)
    deviation = 100.0 * (values - medians) / np.abs(medians)
    bins = np.empty((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            bins[i, j] = _bin_code(abs(deviation[i, j]))
    return DeviationGrid(
        forecaster_ids=moments.forecaster_ids,
        values=values,
        deviation_pct=deviation,
        bins=bins,
        median_variance=med_var,
        median_covariance=med_cov,
    )
