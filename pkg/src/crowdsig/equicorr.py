"""Closed-form analytics under common-correlation error structures.

Model signature curves for the equal-variance, equal-correlation covariance
sigma2 * R, the analytic inverse of R, and optimal combining weights for
general, equicorrelated, and common-correlation/heterogeneous-variance
("weak") covariance matrices.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .panel import check_equicorr_domain, equicorr_domain

__all__ = [
    "EquicorrParams",
    "model_mse",
    "model_mse_ratio",
    "model_dmse",
    "model_dmse_ratio",
    "build_equicorr_matrix",
    "invert_equicorr",
    "optimal_weights",
    "weak_equicorr_weights",
    "equicorr_domain",
]


@dataclass(frozen=True)
class EquicorrParams:
    """Common correlation and common variance, with optional dimension context.

    The correlation must lie in the open interval (-1/(n-1), 1), the exact
    condition for positive definiteness of the correlation matrix.  When
    ``n`` is omitted only the upper bound is enforced.
    """

    rho: float
    sigma2: float
    n: int | None = None

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")
        if self.n is not None:
            check_equicorr_domain(self.rho, self.n)
        elif not self.rho < 1:
            raise DomainError(f"rho must be < 1, got {self.rho}")


def _check_k(k):
    k = np.asarray(k)
    if (k < 1).any():
        raise DomainError("group size k must be >= 1")
    return k


def model_mse(k, params):
    """Population MSE of a k-average under equicorrelation.

    ``(sigma2 / k) * (1 + (k - 1) * rho)``; scalar in, scalar out.
    """
    k = _check_k(k)
    out = (params.sigma2 / k) * (1.0 + (k - 1) * params.rho)
    return float(out) if out.ndim == 0 else out


def model_mse_ratio(k, rho):
    """k-average MSE relative to no averaging: ``(1 + (k-1) rho) / k``.

    The common variance cancels.  Decreasing in k, with limit rho.
    """
    k = _check_k(k)
    if not rho < 1:
        raise DomainError(f"rho must be < 1, got {rho}")
    out = (1.0 + (k - 1) * rho) / k
    return float(out) if out.ndim == 0 else out


def model_dmse(k, params):
    """MSE improvement from growing the pool from k to k+1:
    ``sigma2 * (1 - rho) / (k (k + 1))``."""
    k = _check_k(k)
    out = params.sigma2 * (1.0 - params.rho) / (k * (k + 1.0))
    return float(out) if out.ndim == 0 else out


def model_dmse_ratio(k):
    """Marginal gain relative to the first: ``2 / (k (k + 1))``.

    Parameter-free: identical for every variable forecast.
    """
    k = _check_k(k)
    out = 2.0 / (k * (k + 1.0))
    return float(out) if out.ndim == 0 else out


def build_equicorr_matrix(n, params):
    """The N x N covariance with common variance and common correlation."""
    check_equicorr_domain(params.rho, n)
    if not params.sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    r = np.full((n, n), params.rho)
    np.fill_diagonal(r, 1.0)
    return params.sigma2 * r


def invert_equicorr(n, rho):
    """Analytic inverse of the equicorrelation matrix R.

    ``R^{-1} = I / (1 - rho) - rho 11' / ((1 - rho)(1 + (n - 1) rho))``.
    """
    check_equicorr_domain(rho, n)
    off = -rho / ((1.0 - rho) * (1.0 + (n - 1) * rho))
    out = np.full((n, n), off)
    np.fill_diagonal(out, 1.0 / (1.0 - rho) + off)
    return out


def optimal_weights(sigma):
    """MSE-optimal combining weights for a covariance matrix.

    Solves Sigma x = 1 and normalizes to sum one; positive definiteness is
    required (checked via Cholesky).  Under equicorrelation the result is
    exactly 1/N for every forecaster.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError("covariance must be square")
    if not np.allclose(sigma, sigma.T, rtol=1e-10, atol=1e-12):
        raise ValueError("covariance must be symmetric")
    np.linalg.cholesky(sigma)  # raises LinAlgError if not positive definite
    x = np.linalg.solve(sigma, np.ones(sigma.shape[0]))
    return x / x.sum()


def weak_equicorr_weights(sigmas, rho):
    """Optimal weights under common correlation with heterogeneous variances.

    Closed form for Sigma = D R D with D = diag(sigmas):
    the i-th unnormalized weight is
    ``(1 + (n - 1) rho) / sigma_i^2 - rho * (sum_j 1/sigma_j) / sigma_i``,
    normalized to sum one.  For n = 2 this is the classical optimal
    bivariate combining weight; with equal sigmas it collapses to 1/n.

    Note: a common shorthand writes the off-diagonals of this Sigma as the
    bare correlation; the D R D form used here scales them by sigma_i
    sigma_j, which is the reading consistent with the closed form above.
    """
    sigmas = np.asarray(sigmas, dtype=np.float64)
    if (sigmas <= 0).any():
        raise DomainError("standard deviations must be positive")
    n = sigmas.size
    check_equicorr_domain(rho, n)
    inv = 1.0 / sigmas
    raw = (1.0 + (n - 1) * rho) * inv ** 2 - rho * inv.sum() * inv
    return raw / raw.sum()
