"""Fitting the common-correlation model to a direct signature plot.

The matching estimator picks (rho, sigma2) minimizing the mean squared
divergence Q between a direct MSE signature plot and the model curve.  The
first-order conditions pin sigma2 as an explicit function of rho (the
profile relation), reducing the fit to a univariate search.  The closed-form
estimator reads both parameters straight off the sample moments; on a
balanced panel the two routes coincide because the model curve at the
closed-form point interpolates the direct plot exactly.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _rng
from .equicorr import EquicorrParams, model_mse
from .errors import DomainError, EstimationError
from .panel import CovarianceSummary, _moment_arrays, equicorr_domain
from .sigplot import mse_closed_form

_GRID_POINTS = 200
_EDGE = 1e-9
_GSS_TOL = 1e-11
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class MatchEstimate:
    """Fitted common correlation and variance with fit diagnostics.

    ``valid`` records whether rho lies strictly inside the positive
    definiteness interval; ``boundary`` flags a numeric search that ended at
    the edge of its domain.  Bootstrap standard errors are attached by
    :func:`with_bootstrap_se`.
    """

    rho: float
    sigma2: float
    q: float
    method: str
    valid: bool
    boundary: bool = False
    se_rho: float | None = None
    se_sigma2: float | None = None

    def __post_init__(self):
        for name in ("rho", "sigma2", "q"):
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in ("valid", "boundary"):
            object.__setattr__(self, name, bool(getattr(self, name)))

    def params(self):
        return EquicorrParams(self.rho, self.sigma2)


@dataclass(frozen=True)
class ProfileCoefficients:
    """Sums defining the profile relation sigma2 = c1 / (c2 + c3 * rho)."""

    c1: float
    c2: float
    c3: float

    def __post_init__(self):
        if not self.c2 > 0:
            raise DomainError("c2 must be positive")
        if self.c3 < 0:
            raise DomainError("c3 must be nonnegative")

    @classmethod
    def from_plot(cls, plot):
        if plot.kind != "mse":
            raise ValueError(f"profile coefficients need an mse plot, got {plot.kind}")
        k = plot.k.astype(np.float64)
        return cls(
            c1=float(np.sum(plot.values / k)),
            c2=float(np.sum(1.0 / k ** 2)),
            c3=float(np.sum((k - 1.0) / k ** 2)),
        )


def objective_q(plot, rho, sigma2, n=None):
    """Mean squared divergence between a direct plot and the model curve.

    ``n`` (when given) enforces the positive definiteness lower bound on
    rho; rho < 1 and sigma2 > 0 are always required.
    """
    if plot.kind != "mse":
        raise ValueError(f"objective needs an mse plot, got {plot.kind}")
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    if not rho < 1:
        raise DomainError(f"rho must be < 1, got {rho}")
    if n is not None and not rho > -1.0 / (n - 1):
        raise DomainError(f"rho must exceed -1/(N-1) = {-1.0 / (n - 1)}, got {rho}")
    model = model_mse(plot.k, EquicorrParams(rho, sigma2))
    return float(np.mean((plot.values - model) ** 2))


def profile_sigma2(coeffs, rho):
    """Variance implied by the first-order conditions at a given rho."""
    denom = coeffs.c2 + coeffs.c3 * rho
    if not denom > 0:
        raise DomainError(f"profile denominator c2 + c3*rho = {denom} is not positive")
    return coeffs.c1 / denom


def _golden_section(f, a, b, tol):
    h = b - a
    c, d = b - _INV_PHI * h, a + _INV_PHI * h
    fc, fd = f(c), f(d)
    while h > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            h = b - a
            c = b - _INV_PHI * h
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            h = b - a
            d = a + _INV_PHI * h
            fd = f(d)
    return (a + b) / 2.0


def matching_estimate(plot, n, k_grid_note=None):
    """Minimize Q over rho with sigma2 profiled out.

    A coarse grid over the open interval (-1/(n-1), 1) guards against
    multimodality; golden-section search then refines the best bracket well
    past 1e-10 accuracy in rho.  The plot must cover k starting at 1 with
    positive values.
    """
    if plot.kind != "mse":
        raise ValueError(f"matching estimator needs an mse plot, got {plot.kind}")
    if n < 2:
        raise DomainError("need at least two forecasters")
    if len(plot) < 2 or not (plot.values > 0).all():
        raise EstimationError("degenerate plot: need >= 2 positive values")
    coeffs = ProfileCoefficients.from_plot(plot)

    lo, hi = equicorr_domain(n)
    lo, hi = lo + _EDGE, hi - _EDGE

    def q_of_rho(rho):
        try:
            s2 = profile_sigma2(coeffs, rho)
            if not s2 > 0:
                return math.inf
            return objective_q(plot, rho, s2)
        except DomainError:
            return math.inf

    grid = np.linspace(lo, hi, _GRID_POINTS)
    qs = np.array([q_of_rho(r) for r in grid])
    best = int(np.argmin(qs))
    if not math.isfinite(qs[best]):
        raise EstimationError("objective is infinite over the whole grid")
    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, _GRID_POINTS - 1)]
    rho_hat = _golden_section(q_of_rho, a, b, _GSS_TOL)
    boundary = (rho_hat - lo) < 1e-8 or (hi - rho_hat) < 1e-8
    sigma2_hat = profile_sigma2(coeffs, rho_hat)
    return MatchEstimate(
        rho=float(rho_hat),
        sigma2=float(sigma2_hat),
        q=q_of_rho(rho_hat),
        method="numeric_profile",
        valid=equicorr_domain(n)[0] < rho_hat < 1 and not boundary,
        boundary=boundary,
    )


def closed_form_estimate(moments):
    """Read (rho, sigma2) straight off the sample moments.

    sigma2 is the mean sample variance; rho is the mean pairwise covariance
    divided by sigma2.  The model curve at this point reproduces the direct
    signature plot of a balanced panel exactly, so the fit divergence is
    identically zero.  A rho outside the positive definiteness interval is
    reported as-is with ``valid=False`` (never clipped).
    """
    sigma2 = moments.mean_variance()
    if not sigma2 > 0:
        raise EstimationError("mean variance is zero; nothing to fit")
    rho = moments.mean_pair_covariance() / sigma2
    lo, hi = equicorr_domain(moments.n)
    return MatchEstimate(
        rho=float(rho),
        sigma2=float(sigma2),
        q=0.0,
        method="closed_form",
        valid=bool(lo < rho < hi),
    )


# ---------------------------------------------------------------------------
# Bootstrap
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BootstrapResult:
    se_rho: float
    se_sigma2: float
    n_replicates: int
    n_invalid: int


def _resample_indices(rng, t, block_length):
    if block_length is None or block_length <= 1:
        return rng.integers(0, t, size=t)
    n_blocks = -(-t // block_length)
    starts = rng.integers(0, t - block_length + 1, size=n_blocks)
    idx = (starts[:, np.newaxis] + np.arange(block_length)).ravel()
    return idx[:t]


def _estimate_from_values(values, ids, method, k_max):
    cov, counts = _moment_arrays(values)
    if (np.diag(counts) < 1).any():
        raise EstimationError("a forecaster has no observation in this resample")
    moments = CovarianceSummary(ids, cov, counts)
    if method == "closed_form":
        return closed_form_estimate(moments)
    plot = mse_closed_form(moments, k_max=k_max)
    return matching_estimate(plot, n=moments.n)


def bootstrap_se(panel, estimator="closed_form", b_boot=1000, seed=0,
                 block_length=None, k_max=20):
    """Bootstrap standard errors by resampling time periods.

    Periods are drawn iid with replacement (each draw keeps its full cross
    section); pass ``block_length`` for a moving-block scheme when errors
    are serially correlated.  Replicates whose estimate is invalid
    (boundary rho, incomplete moments, an empty forecaster) are excluded
    and counted.  Replicate streams derive from (seed, replicate index), so
    results are reproducible and independent of execution order.
    """
    if b_boot < 2:
        raise DomainError("need at least two bootstrap replicates")
    if panel.t < 2:
        raise DomainError("need at least two periods to resample")
    if estimator not in ("closed_form", "numeric_profile"):
        raise ValueError(f"unknown estimator {estimator!r}")
    k_max = min(k_max, panel.n)

    rhos, sigma2s = [], []
    n_invalid = 0
    for r in range(b_boot):
        rng = _rng.substream(seed, _rng.BOOTSTRAP, r)
        idx = _resample_indices(rng, panel.t, block_length)
        values = panel.values[:, idx]
        try:
            est = _estimate_from_values(values, panel.forecaster_ids, estimator, k_max)
        except (EstimationError, DomainError, ValueError):
            n_invalid += 1
            continue
        if not est.valid:
            n_invalid += 1
            continue
        rhos.append(est.rho)
        sigma2s.append(est.sigma2)

    if not rhos:
        raise EstimationError("all bootstrap replicates were invalid")
    return BootstrapResult(
        se_rho=float(np.std(rhos)),
        se_sigma2=float(np.std(sigma2s)),
        n_replicates=b_boot,
        n_invalid=n_invalid,
    )


def with_bootstrap_se(estimate, boot):
    """Attach bootstrap standard errors to an estimate."""
    return replace(estimate, se_rho=boot.se_rho, se_sigma2=boot.se_sigma2)
