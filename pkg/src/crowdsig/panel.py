"""Forecast-error panels: ingest, transforms, synthetic generators, moments.

The central container is :class:`ErrorPanel`, an N x T matrix of forecast
errors (percent units) with NaN marking missing cells from forecaster entry
and exit.  Periods are encoded as integers; quarterly data uses
``yq = 4*year + quarter - 1`` (see :func:`period_index` / :func:`period_label`).
"""

import csv
import io as _io
import math
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .errors import (
    DomainError,
    DuplicateKeyError,
    EmptyPanelError,
    IncompleteMomentsError,
    SchemaError,
)

# Tokens that map to a missing cell, in addition to anything non-numeric.
MISSING_TOKENS = frozenset({"", "#N/A", "NA", "N/A"})


def period_index(year, quarter):
    """Encode (year, quarter) as a single strictly ordered integer."""
    if quarter not in (1, 2, 3, 4):
        raise DomainError(f"quarter must be in 1..4, got {quarter}")
    return 4 * int(year) + int(quarter) - 1


def period_label(index):
    """Render an encoded quarterly period as e.g. '1990Q2'."""
    return f"{index // 4}Q{index % 4 + 1}"


def parse_period_label(text):
    """Inverse of :func:`period_label`; also accepts a bare integer."""
    s = str(text).strip()
    if "Q" in s.upper():
        year, q = s.upper().split("Q")
        return period_index(int(year), int(q))
    return int(s)


def _readonly(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ErrorPanel:
    """N forecasters x T periods of forecast errors with NaN for missing.

    Parameters
    ----------
    forecaster_ids : array of int, shape (N,)
    periods : array of int, shape (T,), strictly increasing
    values : array of float, shape (N, T); NaN marks a missing cell
    h : forecast horizon label (quarters), optional
    """

    forecaster_ids: np.ndarray
    periods: np.ndarray
    values: np.ndarray
    h: int | None = None

    def __post_init__(self):
        ids = _readonly(np.asarray(self.forecaster_ids, dtype=np.int64))
        periods = _readonly(np.asarray(self.periods, dtype=np.int64))
        values = _readonly(np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "forecaster_ids", ids)
        object.__setattr__(self, "periods", periods)
        object.__setattr__(self, "values", values)
        if ids.ndim != 1 or periods.ndim != 1 or values.shape != (ids.size, periods.size):
            raise ValueError("shape mismatch between ids, periods, and values")
        if ids.size < 1 or periods.size < 1:
            raise EmptyPanelError("panel must have at least one forecaster and one period")
        if np.unique(ids).size != ids.size:
            raise ValueError("forecaster ids must be unique")
        if periods.size > 1 and not np.all(np.diff(periods) > 0):
            raise ValueError("periods must be strictly increasing")
        if not np.isfinite(values)[~np.isnan(values)].all():
            raise ValueError("values must be finite or NaN")
        if (~np.isnan(values)).sum(axis=1).min() < 1:
            raise EmptyPanelError("every forecaster needs at least one observation")

    @property
    def n(self):
        return self.forecaster_ids.size

    @property
    def t(self):
        return self.periods.size

    @property
    def mask(self):
        """Boolean (N, T) presence mask."""
        return ~np.isnan(self.values)

    @property
    def is_balanced(self):
        return bool(self.mask.all())


class ForecastPanel(ErrorPanel):
    """Level-derived growth forecasts on the same grid as :class:`ErrorPanel`."""


@dataclass(frozen=True)
class LevelPanel:
    """Raw survey level forecasts keyed by (year, quarter, forecaster).

    ``levels[r, p]`` is the level forecast of row r at column position p+1,
    where position 1 is the quarter preceding the survey and positions
    2..H_max run from the survey quarter onward.
    """

    years: np.ndarray
    quarters: np.ndarray
    forecaster_ids: np.ndarray
    levels: np.ndarray  # (rows, H_max), NaN missing

    def __post_init__(self):
        for name in ("years", "quarters", "forecaster_ids"):
            object.__setattr__(self, name, _readonly(np.asarray(getattr(self, name), dtype=np.int64)))
        object.__setattr__(self, "levels", _readonly(np.asarray(self.levels, dtype=np.float64)))
        if self.levels.ndim != 2 or self.levels.shape[0] != self.years.size:
            raise ValueError("levels must be (rows, H_max)")
        if self.h_max < 2:
            raise SchemaError("need at least two level positions")
        if not np.isin(self.quarters, (1, 2, 3, 4)).all():
            raise SchemaError("quarter outside 1..4")
        keys = {(int(y), int(q), int(i)) for y, q, i in zip(self.years, self.quarters, self.forecaster_ids)}
        if len(keys) != self.years.size:
            raise DuplicateKeyError("duplicate (year, quarter, forecaster) keys")

    @property
    def h_max(self):
        return self.levels.shape[1]


@dataclass(frozen=True)
class RealizationSeries:
    """Realized annualized growth rates keyed by encoded period."""

    data: dict

    def __post_init__(self):
        object.__setattr__(self, "data", dict(self.data))

    def get(self, period):
        return self.data.get(int(period), math.nan)

    def __len__(self):
        return len(self.data)


@dataclass(frozen=True)
class CovarianceSummary:
    """Uncentered second moments of an error panel.

    ``cov`` holds sample variances on the diagonal and pairwise-complete
    sample covariances off the diagonal (NaN where a pair never overlaps);
    ``counts`` holds the per-forecaster (diagonal) and per-pair observation
    counts behind each moment.
    """

    forecaster_ids: np.ndarray
    cov: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "forecaster_ids", _readonly(np.asarray(self.forecaster_ids, dtype=np.int64)))
        object.__setattr__(self, "cov", _readonly(np.asarray(self.cov, dtype=np.float64)))
        object.__setattr__(self, "counts", _readonly(np.asarray(self.counts, dtype=np.int64)))
        n = self.forecaster_ids.size
        if self.cov.shape != (n, n) or self.counts.shape != (n, n):
            raise ValueError("cov and counts must be (N, N)")
        if np.nanmin(np.diag(self.cov)) < 0:
            raise ValueError("variances must be nonnegative")

    @property
    def n(self):
        return self.forecaster_ids.size

    @property
    def variances(self):
        return np.diag(self.cov)

    @property
    def pair_values(self):
        """Upper-triangle covariances in row-major pair order."""
        iu = np.triu_indices(self.n, k=1)
        return self.cov[iu]

    @property
    def has_missing_pairs(self):
        return bool(np.isnan(self.pair_values).any()) if self.n > 1 else False

    @property
    def is_uniform_coverage(self):
        """True when every moment is backed by the same number of periods."""
        return bool(np.ptp(self.counts) == 0)

    def mean_variance(self):
        return float(np.mean(self.variances))

    def mean_pair_covariance(self):
        pv = self.pair_values
        if pv.size == 0:
            raise IncompleteMomentsError("no pairs: need at least two forecasters")
        if np.isnan(pv).any():
            raise IncompleteMomentsError("some pairs never overlap; pairwise covariances missing")
        return float(np.mean(pv))


@dataclass(frozen=True)
class PanelSummary:
    """Participation profile: respondents per period and tenure statistics."""

    respondents: np.ndarray  # (T,) non-missing count per period
    tenures: np.ndarray      # (N,) periods present per forecaster
    tenure_mean: float
    tenure_min: int
    tenure_max: int


@dataclass(frozen=True)
class FactorParams:
    """Single-factor error structure: e_it = loading_i * z_t + w_it with AR(1) z."""

    loadings: np.ndarray    # (N,)
    ar_coef: float          # |phi| < 1
    shock_var: float        # innovation variance of the factor, > 0
    idio_vars: np.ndarray   # (N,) idiosyncratic variances, >= 0

    def __post_init__(self):
        object.__setattr__(self, "loadings", _readonly(np.asarray(self.loadings, dtype=np.float64)))
        object.__setattr__(self, "idio_vars", _readonly(np.asarray(self.idio_vars, dtype=np.float64)))
        if self.loadings.shape != self.idio_vars.shape or self.loadings.ndim != 1:
            raise ValueError("loadings and idio_vars must be 1-d and the same length")
        if not abs(self.ar_coef) < 1:
            raise DomainError(f"factor AR coefficient must satisfy |phi| < 1, got {self.ar_coef}")
        if not self.shock_var > 0:
            raise DomainError("factor shock variance must be positive")
        if (self.idio_vars < 0).any():
            raise DomainError("idiosyncratic variances must be nonnegative")

    @property
    def n(self):
        return self.loadings.size


# ---------------------------------------------------------------------------
# Ingest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnLayout:
    """Maps survey file headers onto the fields the loader needs.

    ``level_columns=None`` auto-detects columns named ``<variable><j>`` for
    consecutive j starting at 1 (the published micro-data convention, where
    position 1 is the quarter preceding the survey).
    """

    year: str = "YEAR"
    quarter: str = "QUARTER"
    forecaster: str = "ID"
    level_columns: tuple | None = None
    delimiter: str = ","


def _open_source(source):
    if hasattr(source, "read"):
        return source, False
    return open(source, "r", encoding="utf-8", newline=""), True


def _parse_cell(token):
    s = token.strip()
    if s.upper() in MISSING_TOKENS:
        return math.nan
    try:
        v = float(s)
    except ValueError:
        return math.nan
    return v if math.isfinite(v) else math.nan


def _header_lookup(header, name):
    matches = [i for i, col in enumerate(header) if col.strip().upper() == name.upper()]
    if not matches:
        raise SchemaError(f"required column {name!r} not found in header {header}")
    return matches[0]


def load_spf_levels(source, variable="RGDP", layout=None):
    """Read survey level forecasts from delimited text into a LevelPanel.

    Parameters
    ----------
    source : path or open text stream with a header row
    variable : base name of the level columns when auto-detecting
    layout : ColumnLayout, optional

    Raises
    ------
    SchemaError
        Missing required header or unparseable key field.
    DuplicateKeyError
        Two rows share a (year, quarter, forecaster) key.
    """
    layout = layout or ColumnLayout()
    stream, should_close = _open_source(source)
    try:
        reader = csv.reader(stream, delimiter=layout.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty input: header row required") from None

        iy = _header_lookup(header, layout.year)
        iq = _header_lookup(header, layout.quarter)
        ii = _header_lookup(header, layout.forecaster)
        if layout.level_columns is not None:
            level_idx = [_header_lookup(header, c) for c in layout.level_columns]
        else:
            upper = [c.strip().upper() for c in header]
            level_idx = []
            j = 1
            while f"{variable.upper()}{j}" in upper:
                level_idx.append(upper.index(f"{variable.upper()}{j}"))
                j += 1
        if len(level_idx) < 2:
            raise SchemaError(f"found {len(level_idx)} level columns for {variable!r}; need at least 2")

        years, quarters, ids, levels = [], [], [], []
        seen = {}
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                y = int(float(row[iy]))
                q = int(float(row[iq]))
                fid = int(float(row[ii]))
            except (ValueError, IndexError) as exc:
                raise SchemaError(f"row {rownum}: cannot parse key fields: {exc}") from None
            key = (y, q, fid)
            if key in seen:
                raise DuplicateKeyError(
                    f"duplicate key (year={y}, quarter={q}, id={fid}) at rows {seen[key]} and {rownum}"
                )
            seen[key] = rownum
            years.append(y)
            quarters.append(q)
            ids.append(fid)
            levels.append([_parse_cell(row[j]) if j < len(row) else math.nan for j in level_idx])
    finally:
        if should_close:
            stream.close()

    if not years:
        raise EmptyPanelError("no data rows in level file")
    return LevelPanel(np.array(years), np.array(quarters), np.array(ids), np.array(levels))


def load_realizations(source, year="YEAR", quarter="QUARTER", value="VALUE", delimiter=","):
    """Read a long-format (year, quarter, value) file into a RealizationSeries."""
    stream, should_close = _open_source(source)
    try:
        reader = csv.reader(stream, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty input: header row required") from None
        iy = _header_lookup(header, year)
        iq = _header_lookup(header, quarter)
        iv = _header_lookup(header, value)
        data = {}
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                p = period_index(int(float(row[iy])), int(float(row[iq])))
            except (ValueError, IndexError) as exc:
                raise SchemaError(f"row {rownum}: cannot parse period: {exc}") from None
            if p in data:
                raise DuplicateKeyError(f"duplicate realization for {period_label(p)} at row {rownum}")
            v = _parse_cell(row[iv]) if iv < len(row) else math.nan
            if not math.isnan(v):
                data[p] = v
    finally:
        if should_close:
            stream.close()
    return RealizationSeries(data)


def loads_spf_levels(text, variable="RGDP", layout=None):
    """Convenience: :func:`load_spf_levels` from an in-memory string."""
    return load_spf_levels(_io.StringIO(text), variable=variable, layout=layout)


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------

def levels_to_growth(panel, h):
    """Convert level forecasts to annualized quarter-on-quarter growth rates.

    For horizon h the transform uses level positions (h, h+1):
    ``g = 100 * ((f_target / f_base)**4 - 1)``, with the target quarter being
    the survey quarter plus h-1 (h=1 is the survey quarter itself, forecast
    with prior-quarter information).  Growth is missing when either level is
    missing or the base level is nonpositive.

    Returns a :class:`ForecastPanel` indexed by target period.
    """
    if not 1 <= h <= panel.h_max - 1:
        raise DomainError(f"horizon must be in 1..{panel.h_max - 1}, got {h}")
    base = panel.levels[:, h - 1]
    target = panel.levels[:, h]
    with np.errstate(invalid="ignore", divide="ignore"):
        growth = 100.0 * ((target / base) ** 4 - 1.0)
    growth = np.where(np.isnan(base) | np.isnan(target) | (base <= 0), np.nan, growth)

    survey = 4 * panel.years + panel.quarters - 1
    target_period = survey + (h - 1)

    ids = np.unique(panel.forecaster_ids)
    periods = np.unique(target_period)
    id_pos = {int(v): i for i, v in enumerate(ids)}
    p_pos = {int(v): i for i, v in enumerate(periods)}
    values = np.full((ids.size, periods.size), np.nan)
    for r in range(panel.years.size):
        values[id_pos[int(panel.forecaster_ids[r])], p_pos[int(target_period[r])]] = growth[r]

    keep = ~np.all(np.isnan(values), axis=1)
    if not keep.any():
        raise EmptyPanelError("no forecaster has a computable growth forecast")
    return ForecastPanel(ids[keep], periods, values[keep], h=h)


def compute_errors(forecasts, realized, h=None):
    """Score forecasts against realizations: error = forecast - realization.

    The sign convention is fixed but immaterial downstream (all second
    moments are even in the error).  Cells are missing wherever either side
    is missing; forecasters left with no scored cell are dropped.
    """
    r = np.array([realized.get(p) for p in forecasts.periods])
    if np.isnan(r).all():
        raise EmptyPanelError("no forecast period has a realization")
    errors = forecasts.values - r[np.newaxis, :]
    keep = ~np.all(np.isnan(errors), axis=1)
    if not keep.any():
        raise EmptyPanelError("no forecaster has a scored forecast")
    return ErrorPanel(
        forecasts.forecaster_ids[keep],
        forecasts.periods,
        errors[keep],
        h=h if h is not None else forecasts.h,
    )


def participation_summary(panel):
    """Respondents per period and per-forecaster tenure (periods present)."""
    m = panel.mask
    respondents = m.sum(axis=0)
    tenures = m.sum(axis=1)
    return PanelSummary(
        respondents=respondents,
        tenures=tenures,
        tenure_mean=float(np.mean(tenures)),
        tenure_min=int(np.min(tenures)),
        tenure_max=int(np.max(tenures)),
    )


def extract_balanced(panel, window=None, required_ids=None):
    """Restrict to a window and to forecasters fully present on it.

    Parameters
    ----------
    window : (first, last) inclusive period bounds, or None for all periods
    required_ids : explicit forecaster ids to keep (must be complete on the
        window) instead of selecting every complete forecaster

    The result is ordered by ascending sample error variance and has no
    missing cells.
    """
    if window is None:
        col = np.ones(panel.t, dtype=bool)
    else:
        lo, hi = window
        col = (panel.periods >= lo) & (panel.periods <= hi)
        if not col.any():
            raise EmptyPanelError("window contains no panel periods")
    values = panel.values[:, col]
    complete = ~np.isnan(values).any(axis=1)

    if required_ids is not None:
        rows = []
        for fid in required_ids:
            hit = np.flatnonzero(panel.forecaster_ids == fid)
            if hit.size == 0:
                raise EmptyPanelError(f"forecaster {fid} not in panel")
            rows.append(hit[0])
        rows = np.array(rows)
        if not complete[rows].all():
            bad = [int(fid) for fid, ok in zip(required_ids, complete[rows]) if not ok]
            raise EmptyPanelError(f"forecasters {bad} are not complete on the window")
    else:
        rows = np.flatnonzero(complete)
        if rows.size == 0:
            raise EmptyPanelError("no forecaster is fully present on the window")

    sub = values[rows]
    order = np.argsort(np.mean(sub ** 2, axis=1), kind="stable")
    rows = rows[order]
    return ErrorPanel(panel.forecaster_ids[rows], panel.periods[col], values[rows], h=panel.h)


# ---------------------------------------------------------------------------
# Synthetic panels
# ---------------------------------------------------------------------------

def equicorr_domain(n):
    """Open validity interval for the common correlation at dimension n."""
    return (-1.0 / (n - 1) if n > 1 else -math.inf, 1.0)


def check_equicorr_domain(rho, n):
    lo, hi = equicorr_domain(n)
    if not lo < rho < hi:
        raise DomainError(
            f"common correlation must lie in ({lo}, {hi}) for N={n} "
            f"(positive definiteness), got {rho}"
        )


def simulate_equicorrelated(n, t, rho, sigma2, seed=0):
    """Draw a balanced panel from the common-variance, common-correlation DGP.

    Innovations are Gaussian; the covariance square root is applied
    analytically: for R = (1-rho) I + rho 11', the symmetric root is
    a I + b 11' with a = sqrt(1-rho) and b = (sqrt(1+(n-1)rho) - a)/n.
    """
    check_equicorr_domain(rho, n)
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    rng = _rng.substream(seed, _rng.EQUICORR_SIM)
    z = rng.standard_normal((n, t))
    a = math.sqrt(1.0 - rho)
    b = (math.sqrt(1.0 + (n - 1) * rho) - a) / n
    e = math.sqrt(sigma2) * (a * z + b * z.sum(axis=0, keepdims=True))
    return ErrorPanel(np.arange(1, n + 1), np.arange(t), e)


def simulate_factor(params, t, seed=0):
    """Draw a balanced panel from the single-factor DGP.

    The factor starts in its stationary distribution,
    z_0 ~ N(0, shock_var / (1 - ar_coef**2)).
    """
    n = params.n
    rng = _rng.substream(seed, _rng.FACTOR_SIM)
    phi = params.ar_coef
    z = np.empty(t)
    z0 = rng.standard_normal() * math.sqrt(params.shock_var / (1.0 - phi * phi))
    v = rng.standard_normal(t) * math.sqrt(params.shock_var)
    prev = z0
    for i in range(t):
        prev = phi * prev + v[i]
        z[i] = prev
    w = rng.standard_normal((n, t)) * np.sqrt(params.idio_vars)[:, np.newaxis]
    e = params.loadings[:, np.newaxis] * z[np.newaxis, :] + w
    return ErrorPanel(np.arange(1, n + 1), np.arange(t), e)


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------

def _moment_arrays(values):
    """Uncentered pairwise-complete moments of an (N, T) matrix.

    Returns (cov, counts) where cov[i, j] = mean over overlapping periods of
    e_i * e_j (the diagonal is the mean square) and counts[i, j] is the
    overlap size; zero-overlap pairs get NaN.  Accumulation avoids threaded
    BLAS so results are bitwise reproducible.
    """
    m = (~np.isnan(values)).astype(np.float64)
    e0 = np.where(np.isnan(values), 0.0, values)
    raw = np.einsum("it,jt->ij", e0, e0, optimize=False)
    counts = np.einsum("it,jt->ij", m, m, optimize=False)
    with np.errstate(invalid="ignore", divide="ignore"):
        cov = raw / counts
    cov[counts == 0] = np.nan
    return cov, counts.astype(np.int64)


def sample_moments(panel):
    """Sample variances and pairwise-complete covariances of an error panel.

    Moments are uncentered time averages (errors are treated as zero-mean):
    the variance of forecaster i is the mean of its squared errors over its
    own periods, and the covariance of pair (i, j) is the mean of the cross
    product over the periods where both are present.  Pairs that never
    overlap are flagged missing (NaN).
    """
    cov, counts = _moment_arrays(panel.values)
    if (np.diag(counts) < 1).any():
        raise EmptyPanelError("every forecaster needs at least one observation")
    return CovarianceSummary(panel.forecaster_ids, cov, counts)
