"""CSV/JSON serialization of panels, plots, estimates, and grids.

All floats are written in shortest round-trip decimal form (Python repr),
so emitted CSVs re-read to bitwise-identical values.  A panel is a pair of
files: a long-format CSV of present cells plus a JSON metadata sidecar that
records the full grid (ids, periods), the horizon, and labeling details,
which makes the round trip exact even when a period has no observations.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .panel import ErrorPanel, parse_period_label, period_label
from .sigplot import SignaturePlot


def fmt(x):
    """Shortest decimal representation that round-trips the value."""
    if isinstance(x, (str, np.str_)):
        return str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def _fmt_period(p, period_format):
    return period_label(p) if period_format == "quarterly" else str(int(p))


def sidecar_path(csv_path):
    csv_path = Path(csv_path)
    return csv_path.with_suffix(csv_path.suffix + ".meta.json")


def write_panel(panel, csv_path, variable=None, units="percent", period_format="index"):
    """Write (period, forecaster_id, error) rows plus a metadata sidecar."""
    csv_path = Path(csv_path)
    mask = panel.mask
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["period", "forecaster_id", "error"])
        for j, p in enumerate(panel.periods):
            for i in np.flatnonzero(mask[:, j]):
                w.writerow([
                    _fmt_period(p, period_format),
                    int(panel.forecaster_ids[i]),
                    fmt(panel.values[i, j]),
                ])
    meta = {
        "schema": "crowdsig.error_panel.v1",
        "horizon": panel.h,
        "variable": variable,
        "units": units,
        "period_format": period_format,
        "periods": [int(p) for p in panel.periods],
        "forecaster_ids": [int(i) for i in panel.forecaster_ids],
    }
    with open(sidecar_path(csv_path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return csv_path, sidecar_path(csv_path)


def read_panel(csv_path):
    """Inverse of :func:`write_panel`; returns (panel, metadata dict)."""
    csv_path = Path(csv_path)
    meta_file = sidecar_path(csv_path)
    if not meta_file.exists():
        raise SchemaError(f"panel sidecar {meta_file} not found")
    with open(meta_file, encoding="utf-8") as fh:
        meta = json.load(fh)
    periods = np.array(meta["periods"], dtype=np.int64)
    ids = np.array(meta["forecaster_ids"], dtype=np.int64)
    p_pos = {int(p): j for j, p in enumerate(periods)}
    i_pos = {int(i): r for r, i in enumerate(ids)}
    values = np.full((ids.size, periods.size), np.nan)
    with open(csv_path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"period", "forecaster_id", "error"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise SchemaError(f"panel CSV must have columns {sorted(required)}")
        for row in reader:
            p = parse_period_label(row["period"])
            values[i_pos[int(row["forecaster_id"])], p_pos[p]] = float(row["error"])
    return ErrorPanel(ids, periods, values, h=meta.get("horizon")), meta


# ---------------------------------------------------------------------------
# Signature and distribution plots
# ---------------------------------------------------------------------------

def write_plot_csv(plot, path):
    """Columns: k, value, min, max (extremes blank when absent)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "value", "min", "max"])
        for i, k in enumerate(plot.k):
            w.writerow([
                int(k),
                fmt(plot.values[i]),
                fmt(plot.mins[i]) if plot.mins is not None else "",
                fmt(plot.maxs[i]) if plot.maxs is not None else "",
            ])
    return Path(path)


def plot_to_dict(plot):
    d = {
        "schema": "crowdsig.signature_plot.v1",
        "kind": plot.kind,
        "method": plot.method,
        "approximate": plot.approximate,
        "k": [int(k) for k in plot.k],
        "values": [float(v) for v in plot.values],
    }
    for name in ("mins", "maxs"):
        arr = getattr(plot, name)
        if arr is not None:
            d[name] = [float(v) for v in arr]
    for name in ("reps", "excluded"):
        arr = getattr(plot, name)
        if arr is not None:
            d[name] = [int(v) for v in arr]
    return d


def write_plot_json(plot, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(plot_to_dict(plot), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return Path(path)


def read_plot_json(path):
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    return SignaturePlot(
        k=np.array(d["k"], dtype=np.int64),
        values=np.array(d["values"]),
        kind=d["kind"],
        method=d["method"],
        mins=np.array(d["mins"]) if "mins" in d else None,
        maxs=np.array(d["maxs"]) if "maxs" in d else None,
        reps=np.array(d["reps"], dtype=np.int64) if "reps" in d else None,
        excluded=np.array(d["excluded"], dtype=np.int64) if "excluded" in d else None,
        approximate=d.get("approximate", False),
    )


def write_distribution_csv(dist, path):
    """Columns: k, q1, median, q3, lo, hi, outliers (semicolon-joined)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "q1", "median", "q3", "lo", "hi", "outliers"])
        for i, k in enumerate(dist.k):
            w.writerow([
                int(k),
                fmt(dist.q1[i]),
                fmt(dist.median[i]),
                fmt(dist.q3[i]),
                fmt(dist.whisker_lo[i]),
                fmt(dist.whisker_hi[i]),
                ";".join(fmt(v) for v in dist.outliers[i]),
            ])
    return Path(path)


def write_distribution_json(dist, path):
    d = {
        "schema": "crowdsig.distribution_plot.v1",
        "scale_divisor": float(dist.scale_divisor),
        "k": [int(k) for k in dist.k],
        "q1": [float(v) for v in dist.q1],
        "median": [float(v) for v in dist.median],
        "q3": [float(v) for v in dist.q3],
        "whisker_lo": [float(v) for v in dist.whisker_lo],
        "whisker_hi": [float(v) for v in dist.whisker_hi],
        "outliers": [[float(v) for v in o] for o in dist.outliers],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(d, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return Path(path)


# ---------------------------------------------------------------------------
# Estimates
# ---------------------------------------------------------------------------

def estimate_to_dict(estimate, n_invalid_replicates=None):
    return {
        "schema": "crowdsig.match_estimate.v1",
        "rho": estimate.rho,
        "sigma2": estimate.sigma2,
        "q": estimate.q,
        "method": estimate.method,
        "valid": estimate.valid,
        "boundary": estimate.boundary,
        "se_rho": estimate.se_rho,
        "se_sigma2": estimate.se_sigma2,
        "n_invalid_replicates": n_invalid_replicates,
    }


def write_estimate_json(estimate, path, n_invalid_replicates=None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(estimate_to_dict(estimate, n_invalid_replicates), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return Path(path)


def write_estimates_table_csv(estimates_by_column, path):
    """Estimates table: one column per label (e.g. horizon), classic layout.

    Rows: sigma2, its SE, rho, its SE, the model MSE ratio at k = 1, 5, 15,
    and the objective value Q at the optimum.
    """
    from .equicorr import model_mse_ratio

    labels = list(estimates_by_column)
    rows = [
        ("sigma2", lambda e: fmt(e.sigma2)),
        ("se_sigma2", lambda e: fmt(e.se_sigma2) if e.se_sigma2 is not None else ""),
        ("rho", lambda e: fmt(e.rho)),
        ("se_rho", lambda e: fmt(e.se_rho) if e.se_rho is not None else ""),
        ("mse_ratio_k1", lambda e: fmt(model_mse_ratio(1, e.rho))),
        ("mse_ratio_k5", lambda e: fmt(model_mse_ratio(5, e.rho))),
        ("mse_ratio_k15", lambda e: fmt(model_mse_ratio(15, e.rho))),
        ("q", lambda e: fmt(e.q)),
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["parameter"] + labels)
        for name, getter in rows:
            w.writerow([name] + [getter(estimates_by_column[c]) for c in labels])
    return Path(path)


# ---------------------------------------------------------------------------
# Grids, curves, matrices
# ---------------------------------------------------------------------------

def write_deviation_grid_csv(grid, path):
    """Columns: row_id, col_id, value, deviation_pct, bin."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row_id", "col_id", "value", "deviation_pct", "bin"])
        n = grid.forecaster_ids.size
        for i in range(n):
            for j in range(n):
                w.writerow([
                    int(grid.forecaster_ids[i]),
                    int(grid.forecaster_ids[j]),
                    fmt(grid.values[i, j]),
                    fmt(grid.deviation_pct[i, j]),
                    grid.bin_label(i, j),
                ])
    return Path(path)


def write_curve_csv(path, header, columns):
    """Generic numeric table: header names, equal-length columns."""
    columns = [np.asarray(c) for c in columns]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([fmt(v) for v in row])
    return Path(path)


def read_covariance_csv(path):
    """Read a square covariance matrix, with or without a header row of ids."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise SchemaError("covariance file is empty")

    def numeric(cell):
        try:
            float(cell)
            return True
        except ValueError:
            return False

    start = 0 if all(numeric(c) for c in rows[0]) else 1
    body = rows[start:]
    if not body:
        raise SchemaError("covariance file has a header but no data rows")
    has_row_labels = start == 1 and not numeric(body[0][0])
    data = [[float(c) for c in (r[1:] if has_row_labels else r)] for r in body]
    m = np.array(data)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise SchemaError(f"covariance must be square, got shape {m.shape}")
    return m
