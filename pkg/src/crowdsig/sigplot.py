"""Crowd size signature plots.

A signature plot maps group size k to a statistic of the k-average forecast
error: the level MSE, its ratio to the k=1 benchmark, or the improvement
(delta) from adding one more forecaster.  Three direct routes are provided
(exact enumeration over all groups, Monte Carlo subset sampling, and the
closed form driven by sample moments) plus model-implied curves.
"""

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from . import _rng, equicorr
from .errors import (
    CombinatorialLimitError,
    DegenerateBenchmarkError,
    DomainError,
    EmptyPanelError,
    IncompleteMomentsError,
    UnbalancedPanelError,
)

KINDS = ("mse", "mse_ratio", "dmse", "dmse_ratio")
METHODS = ("exact", "monte_carlo", "closed_form", "model")

# Cap on per-k group enumeration for the exact route.
EXACT_GROUP_LIMIT = 1_000_000

# Replication chunk sizes; results are invariant to these (substream values
# are consumed in canonical order), they only bound peak memory.
_CHUNK_PER_PERIOD = 8192
_CHUNK_FIXED_GROUP = 512


def _readonly(a, dtype=np.float64):
    a = np.asarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SignaturePlot:
    """Ordered (k, value) pairs with provenance tags.

    ``mins``/``maxs`` hold the per-k extremes over Monte Carlo replications,
    ``reps`` the replication count behind each k, and ``excluded`` the
    number of periods skipped per k on unbalanced panels.  ``approximate``
    marks closed-form plots built from pairwise-complete (unequal-coverage)
    moments.
    """

    k: np.ndarray
    values: np.ndarray
    kind: str
    method: str
    mins: np.ndarray | None = None
    maxs: np.ndarray | None = None
    reps: np.ndarray | None = None
    excluded: np.ndarray | None = None
    approximate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "k", _readonly(self.k, dtype=np.int64))
        object.__setattr__(self, "values", _readonly(self.values))
        for name in ("mins", "maxs"):
            if getattr(self, name) is not None:
                object.__setattr__(self, name, _readonly(getattr(self, name)))
        for name in ("reps", "excluded"):
            if getattr(self, name) is not None:
                object.__setattr__(self, name, _readonly(getattr(self, name), dtype=np.int64))
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.k.ndim != 1 or self.k.size == 0:
            raise ValueError("k grid must be a nonempty 1-d array")
        if self.k[0] != 1 or (self.k.size > 1 and not np.all(np.diff(self.k) > 0)):
            raise ValueError("k must increase strictly from 1")
        if self.values.shape != self.k.shape:
            raise ValueError("values must match the k grid")
        if self.kind == "mse" and (self.values < 0).any():
            raise ValueError("MSE values must be nonnegative")
        if self.kind == "mse_ratio" and not math.isclose(self.values[0], 1.0, rel_tol=1e-9):
            raise ValueError("a ratio plot must have value 1 at k=1")
        for name in ("mins", "maxs", "reps", "excluded"):
            arr = getattr(self, name)
            if arr is not None and arr.shape != self.k.shape:
                raise ValueError(f"{name} must match the k grid")
        if self.mins is not None and self.maxs is not None:
            # allow a few ulp of slack: the mean of B identical replications
            # can round past the extremes
            span = np.maximum(np.abs(self.mins), np.abs(self.maxs)) * 1e-12
            if ((self.values < self.mins - span) | (self.values > self.maxs + span)).any():
                raise ValueError("value must lie within [min, max]")

    def value_at(self, k):
        idx = np.flatnonzero(self.k == k)
        if idx.size == 0:
            raise KeyError(f"k={k} not on the plot grid")
        return float(self.values[idx[0]])

    def __len__(self):
        return self.k.size


@dataclass(frozen=True)
class MonteCarloConfig:
    """Settings for the subset-sampling approximation.

    ``per_period`` mode redraws the k-subset of each period's respondents
    independently every period (the unbalanced-panel-friendly procedure);
    ``fixed_group`` holds one k-subset fixed across periods, making the
    per-replication extremes the best/worst stable groups.  In fixed_group
    mode only forecasters present in at least ``membership_fraction`` of
    periods are eligible.
    """

    b: int = 30_000
    seed: int = 0
    group_mode: str = "per_period"
    k_max: int = 20
    membership_fraction: float = 1.0

    def __post_init__(self):
        if self.b < 1:
            raise DomainError("replication count must be >= 1")
        if self.k_max < 1:
            raise DomainError("k_max must be >= 1")
        if self.group_mode not in ("per_period", "fixed_group"):
            raise DomainError(f"unknown group_mode {self.group_mode!r}")
        if not 0 < self.membership_fraction <= 1:
            raise DomainError("membership_fraction must be in (0, 1]")


@dataclass(frozen=True)
class DistributionPlot:
    """Boxplot summaries of squared k-average errors, per k.

    All statistics are scaled by the k=1 median (``scale_divisor``), so the
    median at k=1 is exactly 1.  Whiskers follow the 1.5 IQR rule clipped to
    the data; ``outliers`` holds the scaled values beyond the whiskers.
    """

    k: np.ndarray
    q1: np.ndarray
    median: np.ndarray
    q3: np.ndarray
    whisker_lo: np.ndarray
    whisker_hi: np.ndarray
    outliers: tuple
    scale_divisor: float

    def __post_init__(self):
        object.__setattr__(self, "k", _readonly(self.k, dtype=np.int64))
        for name in ("q1", "median", "q3", "whisker_lo", "whisker_hi"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        object.__setattr__(self, "outliers", tuple(_readonly(o) for o in self.outliers))
        if not (self.q1 <= self.median).all() or not (self.median <= self.q3).all():
            raise ValueError("quartiles must be ordered")
        if not (self.whisker_lo <= self.q1).all() or not (self.whisker_hi >= self.q3).all():
            raise ValueError("whiskers must bracket the box")
        if self.k[0] == 1 and not math.isclose(self.median[0], 1.0, rel_tol=1e-12):
            raise ValueError("scaled median at k=1 must be 1")

    def __len__(self):
        return self.k.size


# ---------------------------------------------------------------------------
# Direct routes
# ---------------------------------------------------------------------------

def mse_exact(panel, k_max=20):
    """Average MSE of the k-average over every group of size k, exactly.

    Enumerates all C(N, k) groups per k, so the panel must be balanced and
    the group count must stay within ``EXACT_GROUP_LIMIT``.
    """
    if not panel.is_balanced:
        raise UnbalancedPanelError("exact enumeration requires a balanced panel")
    n = panel.n
    k_max = min(k_max, n)
    for k in range(1, k_max + 1):
        if math.comb(n, k) > EXACT_GROUP_LIMIT:
            raise CombinatorialLimitError(
                f"C({n}, {k}) = {math.comb(n, k)} groups exceeds "
                f"{EXACT_GROUP_LIMIT}; use mse_monte_carlo"
            )
    e = panel.values
    values = np.empty(k_max)
    for k in range(1, k_max + 1):
        total = 0.0
        count = 0
        combos = itertools.combinations(range(n), k)
        while True:
            chunk = list(itertools.islice(combos, 4096))
            if not chunk:
                break
            idx = np.array(chunk)                       # (c, k)
            means = e[idx].sum(axis=1) / k              # (c, T)
            total += float(np.mean(means ** 2, axis=1).sum())
            count += idx.shape[0]
        values[k - 1] = total / count
    return SignaturePlot(np.arange(1, k_max + 1), values, kind="mse", method="exact")


def mse_closed_form(moments, k_max=20):
    """Signature plot from sample moments via the exact identity.

    value(k) = (mean variance / k) * (1 + (k - 1) * rhobar) with
    rhobar = mean pairwise covariance / mean variance.  On a balanced panel
    this reproduces :func:`mse_exact` to machine precision; with
    pairwise-complete moments from an unbalanced panel the plot is flagged
    approximate.
    """
    if moments.has_missing_pairs:
        raise IncompleteMomentsError("closed form needs every pairwise covariance")
    sbar = moments.mean_variance()
    k_max = min(k_max, moments.n)
    k = np.arange(1, k_max + 1)
    if moments.n == 1:
        values = np.full(1, sbar)
    else:
        rhobar = moments.mean_pair_covariance() / sbar
        values = (sbar / k) * (1.0 + (k - 1) * rhobar)
    return SignaturePlot(
        k, values, kind="mse", method="closed_form",
        approximate=not moments.is_uniform_coverage,
    )


def model_plot(params, k_max=20, kind="mse"):
    """Model-implied signature plot at the given parameters."""
    k = np.arange(1, k_max + 1)
    if kind == "mse":
        values = equicorr.model_mse(k, params)
    elif kind == "mse_ratio":
        values = equicorr.model_mse_ratio(k, params.rho)
    elif kind == "dmse":
        values = equicorr.model_dmse(k, params)
    elif kind == "dmse_ratio":
        values = equicorr.model_dmse_ratio(k)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return SignaturePlot(k, values, kind=kind, method="model")


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def _respondents_by_period(panel):
    mask = panel.mask
    return [np.flatnonzero(mask[:, t]) for t in range(panel.t)]


def _accumulate_per_period(panel, config):
    """Per-replication sums of squared k-average errors, all k at once.

    One uniform permutation of each period's respondents serves every k
    (the size-k group is the permutation's k-prefix, summed via cumsum), so
    each k sees a uniformly drawn group and replications stay independent.
    Returns (acc, feasible) where acc[b, k-1] sums msq over feasible periods
    and feasible[k-1] counts periods with at least k respondents.
    """
    k_max, b = config.k_max, config.b
    respondents = _respondents_by_period(panel)
    n_t = np.array([idx.size for idx in respondents])
    if k_max > n_t.max():
        raise EmptyPanelError(
            f"k_max={k_max} exceeds the largest per-period respondent count {n_t.max()}"
        )
    acc = np.zeros((b, k_max))
    inv_k = 1.0 / np.arange(1.0, k_max + 1)
    for t, idx in enumerate(respondents):
        if idx.size == 0:
            continue
        rng = _rng.substream(config.seed, _rng.MC_PER_PERIOD, t)
        e_t = panel.values[idx, t]
        upper = min(k_max, idx.size)
        full_sum = float(e_t.sum())  # k = n_t draws the whole set: keep it order-independent
        start = 0
        while start < b:
            c = min(_CHUNK_PER_PERIOD, b - start)
            u = rng.random((c, idx.size))
            perm = np.argsort(u, axis=1)
            cs = np.cumsum(e_t[perm], axis=1)[:, :upper]
            if upper == idx.size:
                cs[:, -1] = full_sum
            acc[start:start + c, :upper] += (cs * inv_k[:upper]) ** 2
            start += c
    feasible = (n_t[:, np.newaxis] >= np.arange(1, k_max + 1)).sum(axis=0)
    return acc, feasible


def _eligible_fixed_group(panel, fraction):
    present = panel.mask.sum(axis=1)
    return np.flatnonzero(present >= fraction * panel.t - 1e-9)


def _accumulate_fixed_group(panel, config):
    """Per-replication MSEs when one group is held fixed across periods.

    For each replication a permutation of the eligible forecasters defines
    nested groups (k-prefixes).  A period enters a replication's average
    only when every group member is present.  Returns (mse, reps) where
    mse[b, k-1] is NaN when no period was feasible for that replication.
    """
    k_max, b = config.k_max, config.b
    eligible = _eligible_fixed_group(panel, config.membership_fraction)
    if k_max > eligible.size:
        raise EmptyPanelError(
            f"k_max={k_max} exceeds the {eligible.size} forecasters present in "
            f">= {config.membership_fraction:.0%} of periods"
        )
    e0 = np.where(np.isnan(panel.values[eligible]), 0.0, panel.values[eligible])
    present = panel.mask[eligible]
    complete = bool(present.all())
    rng = _rng.substream(config.seed, _rng.MC_FIXED_GROUP)
    inv_k = 1.0 / np.arange(1.0, k_max + 1)
    mse = np.empty((b, k_max))
    full_sum = e0.sum(axis=0)  # k = n_e is the whole pool: keep it order-independent
    start = 0
    while start < b:
        c = min(_CHUNK_FIXED_GROUP, b - start)
        u = rng.random((c, eligible.size))
        perm = np.argsort(u, axis=1)                     # (c, n_e)
        cs = np.cumsum(e0[perm], axis=1)[:, :k_max, :]   # (c, k_max, T)
        if k_max == eligible.size:
            cs[:, -1, :] = full_sum
        msq = (cs * inv_k[:, np.newaxis]) ** 2
        if complete:
            mse[start:start + c] = msq.mean(axis=2)
        else:
            ok = np.logical_and.accumulate(present[perm], axis=1)[:, :k_max, :]
            n_ok = ok.sum(axis=2)
            with np.errstate(invalid="ignore", divide="ignore"):
                mse[start:start + c] = np.where(ok, msq, 0.0).sum(axis=2) / n_ok
            mse[start:start + c][n_ok == 0] = np.nan
        start += c
    return mse


def mse_monte_carlo(panel, config=None):
    """Approximate the all-groups average MSE by random subset sampling.

    For each replication, draw a uniformly random group of size k (fresh
    per period, or held fixed, per ``config.group_mode``), time-average its
    squared mean error, then average over the B replications.  Per-k
    extremes over replications are recorded in ``mins``/``maxs``; periods
    with fewer than k respondents are excluded from the time average and
    counted in ``excluded``.  Output is bit-reproducible for a fixed seed.
    """
    config = config or MonteCarloConfig()
    k_max = min(config.k_max, panel.n)
    config = replace(config, k_max=k_max)
    k = np.arange(1, k_max + 1)

    if config.group_mode == "per_period":
        acc, feasible = _accumulate_per_period(panel, config)
        if (feasible == 0).any():
            raise EmptyPanelError("some k has no feasible period")
        mse = acc / feasible
        reps = np.full(k_max, config.b)
        excluded = panel.t - feasible
    else:
        mse = _accumulate_fixed_group(panel, config)
        valid = ~np.isnan(mse)
        reps = valid.sum(axis=0)
        if (reps == 0).any():
            raise EmptyPanelError("some k has no replication with a feasible period")
        mse = np.ma.masked_invalid(mse)
        excluded = None

    values = np.asarray(mse.mean(axis=0))
    mins = np.asarray(mse.min(axis=0))
    maxs = np.asarray(mse.max(axis=0))
    # the mean of B identical replications can round one ulp past the extremes
    values = np.clip(values, mins, maxs)
    return SignaturePlot(
        k, values, kind="mse", method="monte_carlo",
        mins=mins, maxs=maxs, reps=np.asarray(reps),
        excluded=None if excluded is None else np.asarray(excluded),
    )


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------

def to_ratio(plot):
    """Scale a level plot by its k=1 value; idempotent on ratio plots."""
    if plot.kind == "mse_ratio":
        return plot
    if plot.kind != "mse":
        raise ValueError(f"cannot take the ratio of a {plot.kind} plot")
    if plot.k[0] != 1:
        raise ValueError("ratio transform needs the k=1 benchmark on the grid")
    base = plot.values[0]
    if base == 0:
        raise DegenerateBenchmarkError("k=1 MSE is zero; ratio undefined")
    return SignaturePlot(
        plot.k,
        plot.values / base,
        kind="mse_ratio",
        method=plot.method,
        mins=None if plot.mins is None else plot.mins / base,
        maxs=None if plot.maxs is None else plot.maxs / base,
        reps=plot.reps,
        excluded=plot.excluded,
        approximate=plot.approximate,
    )


def to_dmse(plot, as_ratio=False):
    """First differences MSE(k) - MSE(k+1), optionally scaled by the first.

    For any closed-form plot the ratio form is exactly 2 / (k (k + 1)),
    independent of the data.
    """
    if plot.kind != "mse":
        raise ValueError(f"dmse transform needs an mse plot, got {plot.kind}")
    if len(plot) < 2 or not np.all(np.diff(plot.k) == 1):
        raise ValueError("dmse needs consecutive k values (k, k+1 pairs)")
    d = plot.values[:-1] - plot.values[1:]
    kind = "dmse"
    if as_ratio:
        if d[0] == 0:
            raise DegenerateBenchmarkError("DMSE(1) is zero; ratio undefined")
        d = d / d[0]
        kind = "dmse_ratio"
    return SignaturePlot(
        plot.k[:-1], d, kind=kind, method=plot.method, approximate=plot.approximate
    )


# ---------------------------------------------------------------------------
# Squared-error distributions
# ---------------------------------------------------------------------------

def squared_error_distribution(panel, config=None):
    """Boxplot statistics of squared k-average errors, pooled over periods
    and replications.

    Each k uses independent draws (one random group per period per
    replication).  Quartiles interpolate order statistics linearly at
    probability positions (i - 1) / (n - 1); everything is scaled by the
    pooled median at k=1.
    """
    config = config or MonteCarloConfig()
    k_max = min(config.k_max, panel.n)
    respondents = _respondents_by_period(panel)
    n_t = np.array([idx.size for idx in respondents])
    if k_max > n_t.max():
        raise EmptyPanelError(
            f"k_max={k_max} exceeds the largest per-period respondent count {n_t.max()}"
        )

    stats = {"q1": [], "median": [], "q3": [], "lo": [], "hi": []}
    raw_outliers = []
    divisor = None
    for k in range(1, k_max + 1):
        pools = []
        for t, idx in enumerate(respondents):
            if idx.size < k:
                continue
            rng = _rng.substream(config.seed, _rng.MC_DISTRIBUTION, k, t)
            e_t = panel.values[idx, t]
            start = 0
            while start < config.b:
                c = min(_CHUNK_PER_PERIOD, config.b - start)
                u = rng.random((c, idx.size))
                sel = np.argpartition(u, k - 1, axis=1)[:, :k]
                pools.append((e_t[sel].mean(axis=1)) ** 2)
                start += c
        pool = np.concatenate(pools)
        q1, med, q3 = np.quantile(pool, [0.25, 0.5, 0.75])
        iqr = q3 - q1
        lo_cap, hi_cap = q1 - 1.5 * iqr, q3 + 1.5 * iqr
        inside = pool[(pool >= lo_cap) & (pool <= hi_cap)]
        lo, hi = float(inside.min()), float(inside.max())
        out = np.sort(pool[(pool < lo_cap) | (pool > hi_cap)])
        if k == 1:
            divisor = float(med)
            if divisor == 0:
                raise DegenerateBenchmarkError("median squared error at k=1 is zero")
        stats["q1"].append(q1)
        stats["median"].append(med)
        stats["q3"].append(q3)
        stats["lo"].append(lo)
        stats["hi"].append(hi)
        raw_outliers.append(out)

    return DistributionPlot(
        k=np.arange(1, k_max + 1),
        q1=np.array(stats["q1"]) / divisor,
        median=np.array(stats["median"]) / divisor,
        q3=np.array(stats["q3"]) / divisor,
        whisker_lo=np.array(stats["lo"]) / divisor,
        whisker_hi=np.array(stats["hi"]) / divisor,
        outliers=tuple(o / divisor for o in raw_outliers),
        scale_divisor=divisor,
    )
