"""Command-line pipelines.

Subcommands: ingest, signature, estimate, simulate, weights, factor.  Every
command accepts ``--config PATH`` (an INI file; section per command plus an
optional [common] section) with command-line flags taking precedence, and
writes a ``manifest.json`` listing every emitted file along with a hash of
the configuration and inputs.  Exit codes: 0 success, 1 completed with
warnings (recorded in the manifest), 2 invalid input or configuration.
"""

import argparse
import configparser
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, equicorr, estimator, factor as factor_mod, io as cio, panel as panel_mod, sigplot
from .errors import CrowdsigError, DomainError

_CONFIG_KEYS = {
    "b": int,
    "b_boot": int,
    "seed": int,
    "kmax": int,
    "horizons": str,
    "variable": str,
    "formats": str,
    "out": str,
    "group_mode": str,
    "membership_fraction": float,
    "block_length": int,
    "threads": int,
}


@dataclass
class RunConfig:
    command: str = ""
    b: int = 30_000
    b_boot: int = 1000
    seed: int = 0
    kmax: int = 20
    horizons: tuple = (1, 2, 3, 4)
    variable: str = "RGDP"
    formats: tuple = ("csv", "json")
    out: Path = Path("out")
    group_mode: str = "per_period"
    membership_fraction: float = 1.0
    block_length: int | None = None
    threads: int = 0
    extra: dict = field(default_factory=dict)

    def public_dict(self):
        d = {
            "b": self.b,
            "b_boot": self.b_boot,
            "seed": self.seed,
            "kmax": self.kmax,
            "horizons": list(self.horizons),
            "variable": self.variable,
            "formats": list(self.formats),
            "group_mode": self.group_mode,
            "membership_fraction": self.membership_fraction,
            "block_length": self.block_length,
        }
        d.update(self.extra)
        return d


def _parse_horizons(text):
    hs = tuple(int(h) for h in str(text).replace(" ", "").split(",") if h)
    if not hs or any(h not in (1, 2, 3, 4) for h in hs):
        raise DomainError(f"horizons must be a subset of 1..4, got {text!r}")
    return hs


def _parse_formats(text):
    fs = tuple(f.strip().lower() for f in str(text).split(",") if f.strip())
    bad = [f for f in fs if f not in ("csv", "json", "svg")]
    if bad:
        raise DomainError(f"unknown output formats: {bad}")
    return fs or ("csv", "json")


def load_config(path, command):
    """Read config file values for a command ([common] overridden by [command])."""
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise CrowdsigError(f"config file {path} not found or unreadable")
    merged = {}
    for section in ("common", command):
        if cp.has_section(section):
            for key, value in cp.items(section):
                if key not in _CONFIG_KEYS:
                    raise DomainError(f"unknown config key {key!r} in [{section}]")
                merged[key] = _CONFIG_KEYS[key](value)
    return merged


def build_config(args):
    """Defaults < config file < command-line flags."""
    cfg = RunConfig(command=args.command)
    if getattr(args, "config", None):
        for key, value in load_config(args.config, args.command).items():
            if key == "horizons":
                cfg.horizons = _parse_horizons(value)
            elif key == "formats":
                cfg.formats = _parse_formats(value)
            elif key == "out":
                cfg.out = Path(value)
            else:
                setattr(cfg, key, value)
    for key in ("b", "b_boot", "seed", "kmax", "variable", "group_mode",
                "membership_fraction", "block_length"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "horizons", None) is not None:
        cfg.horizons = _parse_horizons(args.horizons)
    if getattr(args, "formats", None) is not None:
        cfg.formats = _parse_formats(args.formats)
    if getattr(args, "out", None) is not None:
        cfg.out = Path(args.out)

    env_threads = os.environ.get("CROWDSIG_THREADS")
    if env_threads is not None:
        try:
            cfg.threads = int(env_threads)
            if cfg.threads < 0:
                raise ValueError
        except ValueError:
            raise DomainError(f"CROWDSIG_THREADS must be a nonnegative integer, got {env_threads!r}")
    return cfg


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class Bundle:
    """Collects emitted files and warnings; writes the run manifest."""

    def __init__(self, config, inputs):
        self.config = config
        self.inputs = {str(p): _sha256(p) for p in inputs}
        self.files = []
        self.warnings = []

    def add(self, path):
        self.files.append(str(Path(path).relative_to(self.config.out)))

    def warn(self, message):
        self.warnings.append(message)
        print(f"warning: {message}", file=sys.stderr)

    def write(self):
        payload = {
            "command": self.config.command,
            "config": self.config.public_dict(),
            "inputs": self.inputs,
        }
        digest = hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode()
        ).hexdigest()
        manifest = dict(payload)
        manifest.update({
            "config_hash": digest,
            "version": __version__,
            "seeds": {"seed": self.config.seed},
            "threads": self.config.threads,
            "files": sorted(self.files),
            "warnings": self.warnings,
        })
        out = self.config.out / "manifest.json"
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
            fh.write("\n")
        return manifest


def _emit_plot(bundle, plot, stem):
    cfg = bundle.config
    if "csv" in cfg.formats:
        bundle.add(cio.write_plot_csv(plot, cfg.out / f"{stem}.csv"))
    if "json" in cfg.formats:
        bundle.add(cio.write_plot_json(plot, cfg.out / f"{stem}.json"))


def _emit_svg(bundle, data, stem, labels=None, style=None):
    if "svg" not in bundle.config.formats:
        return
    from . import svg as csvg

    path = bundle.config.out / f"{stem}.svg"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(csvg.render_svg(data, style=style, labels=labels))
    bundle.add(path)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_ingest(args):
    cfg = build_config(args)
    levels_path, real_path = Path(args.levels), Path(args.realizations)
    for p in (levels_path, real_path):
        if not p.exists():
            raise CrowdsigError(f"input file not found: {p}")
    cfg.out.mkdir(parents=True, exist_ok=True)
    bundle = Bundle(cfg, [levels_path, real_path])

    levels = panel_mod.load_spf_levels(levels_path, variable=cfg.variable)
    realized = panel_mod.load_realizations(real_path)

    for h in cfg.horizons:
        forecasts = panel_mod.levels_to_growth(levels, h)
        errors = panel_mod.compute_errors(forecasts, realized)
        csv_path, meta_path = cio.write_panel(
            errors, cfg.out / f"panel_{cfg.variable}_h{h}.csv",
            variable=cfg.variable, units="percent", period_format="quarterly",
        )
        bundle.add(csv_path)
        bundle.add(meta_path)

    # Figure-1 analogue: participation measured on the raw survey rows.
    survey_periods = 4 * levels.years + levels.quarters - 1
    ids = np.unique(levels.forecaster_ids)
    periods = np.unique(survey_periods)
    presence = np.full((ids.size, periods.size), np.nan)
    i_pos = {int(v): i for i, v in enumerate(ids)}
    p_pos = {int(v): j for j, v in enumerate(periods)}
    for r in range(levels.years.size):
        if not np.all(np.isnan(levels.levels[r])):
            presence[i_pos[int(levels.forecaster_ids[r])], p_pos[int(survey_periods[r])]] = 1.0
    summary = panel_mod.participation_summary(
        panel_mod.ErrorPanel(ids, periods, presence)
    )
    if "csv" in cfg.formats:
        bundle.add(cio.write_curve_csv(
            cfg.out / "participation.csv",
            ["period", "respondents"],
            [[panel_mod.period_label(p) for p in periods], summary.respondents],
        ))
    if "json" in cfg.formats:
        path = cfg.out / "participation.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({
                "tenure_mean": summary.tenure_mean,
                "tenure_min": summary.tenure_min,
                "tenure_max": summary.tenure_max,
                "n_forecasters": int(ids.size),
                "n_periods": int(periods.size),
            }, fh, indent=1, sort_keys=True)
            fh.write("\n")
        bundle.add(path)

    bundle.write()
    return 1 if bundle.warnings else 0


def _load_panels(args):
    paths = [Path(p) for p in args.panel]
    for p in paths:
        if not p.exists():
            raise CrowdsigError(f"panel file not found: {p}")
    loaded = []
    for p in paths:
        pnl, meta = cio.read_panel(p)
        loaded.append((p, pnl, meta))
    return loaded


def cmd_signature(args):
    cfg = build_config(args)
    loaded = _load_panels(args)
    cfg.out.mkdir(parents=True, exist_ok=True)
    bundle = Bundle(cfg, [p for p, _, _ in loaded])
    methods = tuple(m.strip() for m in (args.methods or "exact,monte_carlo,closed_form").split(","))

    by_variable = {}
    for path, pnl, meta in loaded:
        stem = path.stem
        mc_config = sigplot.MonteCarloConfig(
            b=cfg.b, seed=cfg.seed, group_mode=cfg.group_mode,
            k_max=cfg.kmax, membership_fraction=cfg.membership_fraction,
        )
        plots = {}
        if "exact" in methods:
            try:
                plots["exact"] = sigplot.mse_exact(pnl, k_max=cfg.kmax)
            except CrowdsigError as exc:
                bundle.warn(f"{stem}: exact method skipped: {exc}")
        if "closed_form" in methods:
            try:
                plots["closed_form"] = sigplot.mse_closed_form(
                    panel_mod.sample_moments(pnl), k_max=cfg.kmax)
            except CrowdsigError as exc:
                bundle.warn(f"{stem}: closed_form method skipped: {exc}")
        if "monte_carlo" in methods:
            plots["monte_carlo"] = sigplot.mse_monte_carlo(pnl, mc_config)

        for method, plot in plots.items():
            _emit_plot(bundle, plot, f"{stem}_mse_{method}")
            _emit_plot(bundle, sigplot.to_ratio(plot), f"{stem}_mse_ratio_{method}")
            if len(plot) >= 2:
                _emit_plot(bundle, sigplot.to_dmse(plot, as_ratio=True),
                           f"{stem}_dmse_ratio_{method}")

        if "monte_carlo" in plots:
            dist = sigplot.squared_error_distribution(pnl, mc_config)
            if "csv" in cfg.formats:
                bundle.add(cio.write_distribution_csv(dist, cfg.out / f"{stem}_dist.csv"))
            if "json" in cfg.formats:
                bundle.add(cio.write_distribution_json(dist, cfg.out / f"{stem}_dist.json"))
            from .svg import SvgStyle

            _emit_svg(bundle, dist, f"{stem}_dist",
                      style=SvgStyle(title=stem, ylabel="squared error (scaled)"))

        label = f"h={meta.get('horizon')}" if meta.get("horizon") is not None else stem
        by_variable.setdefault(meta.get("variable") or stem, []).append((label, plots))

    if "svg" in cfg.formats:
        from .svg import SvgStyle

        for variable, entries in by_variable.items():
            for method in methods:
                series = [(lab, p[method]) for lab, p in entries if method in p]
                if not series:
                    continue
                ratio_plots = [sigplot.to_ratio(p) for _, p in series]
                _emit_svg(
                    bundle, ratio_plots, f"{variable}_mse_ratio_{method}",
                    labels=[lab for lab, _ in series],
                    style=SvgStyle(title=f"{variable} ({method})", ylabel="MSE ratio"),
                )

    bundle.write()
    return 1 if bundle.warnings else 0


def cmd_estimate(args):
    cfg = build_config(args)
    loaded = _load_panels(args)
    cfg.out.mkdir(parents=True, exist_ok=True)
    bundle = Bundle(cfg, [p for p, _, _ in loaded])

    tables = {}
    for path, pnl, meta in loaded:
        stem = path.stem
        label = f"h={meta.get('horizon')}" if meta.get("horizon") is not None else stem
        variable = meta.get("variable") or stem
        try:
            moments = panel_mod.sample_moments(pnl)
            if moments.has_missing_pairs:
                bundle.warn(f"{stem}: zero-overlap pairs; using Monte Carlo direct plot")
                plot = sigplot.mse_monte_carlo(pnl, sigplot.MonteCarloConfig(
                    b=cfg.b, seed=cfg.seed, k_max=cfg.kmax))
                closed = None
            else:
                plot = sigplot.mse_closed_form(moments, k_max=cfg.kmax)
                closed = estimator.closed_form_estimate(moments)
            numeric = estimator.matching_estimate(plot, n=pnl.n)
        except CrowdsigError as exc:
            bundle.warn(f"{stem}: estimation failed: {exc}")
            continue

        _emit_plot(bundle, plot, f"{stem}_direct_mse")
        for name, est in (("numeric_profile", numeric), ("closed_form", closed)):
            if est is None:
                continue
            n_invalid = None
            try:
                boot = estimator.bootstrap_se(
                    pnl, estimator=name, b_boot=cfg.b_boot, seed=cfg.seed,
                    block_length=cfg.block_length, k_max=cfg.kmax)
                est = estimator.with_bootstrap_se(est, boot)
                n_invalid = boot.n_invalid
            except CrowdsigError as exc:
                bundle.warn(f"{stem}: bootstrap for {name} failed: {exc}")
            if "json" in cfg.formats:
                bundle.add(cio.write_estimate_json(
                    est, cfg.out / f"{stem}_estimate_{name}.json",
                    n_invalid_replicates=n_invalid))
            tables.setdefault((variable, name), {})[label] = est

        # Profile and objective traces over the rho domain (k grid fixed).
        coeffs = estimator.ProfileCoefficients.from_plot(plot)
        lo, hi = panel_mod.equicorr_domain(pnl.n)
        rho_grid = np.linspace(lo + 1e-6, hi - 1e-6, 199)
        sig2 = np.array([estimator.profile_sigma2(coeffs, r) for r in rho_grid])
        qs = np.array([
            estimator.objective_q(plot, r, s) if s > 0 else math.nan
            for r, s in zip(rho_grid, sig2)
        ])
        if "csv" in cfg.formats:
            bundle.add(cio.write_curve_csv(
                cfg.out / f"{stem}_profile.csv",
                ["rho", "sigma2", "q"], [rho_grid, sig2, qs]))

    if "csv" in cfg.formats:
        for (variable, name), columns in tables.items():
            bundle.add(cio.write_estimates_table_csv(
                columns, cfg.out / f"{variable}_estimates_{name}.csv"))

    bundle.write()
    return 1 if bundle.warnings else 0


def cmd_simulate(args):
    cfg = build_config(args)
    cfg.out.mkdir(parents=True, exist_ok=True)
    bundle = Bundle(cfg, [])
    cfg.extra = {
        "dgp": args.dgp, "n": args.n, "t": args.t,
        "rho": args.rho, "sigma2": args.sigma2,
    }

    if args.dgp == "equicorr":
        pnl = panel_mod.simulate_equicorrelated(args.n, args.t, args.rho, args.sigma2, seed=cfg.seed)
    else:
        params_path = Path(args.params)
        if not params_path.exists():
            raise CrowdsigError(f"factor params file not found: {params_path}")
        bundle.inputs[str(params_path)] = _sha256(params_path)
        pnl = panel_mod.simulate_factor(_read_factor_params(params_path), args.t, seed=cfg.seed)

    csv_path, meta_path = cio.write_panel(
        pnl, cfg.out / f"panel_sim_{args.dgp}.csv", variable=f"sim_{args.dgp}")
    bundle.add(csv_path)
    bundle.add(meta_path)

    if args.theory:
        rhos = [float(r) for r in args.theory.split(",")]
        curves = []
        for rho in rhos:
            curve = sigplot.model_plot(
                equicorr.EquicorrParams(rho, 1.0), k_max=cfg.kmax, kind="mse_ratio")
            curves.append(curve)
            _emit_plot(bundle, curve, f"theory_mse_ratio_rho{rho:g}")
        from .svg import SvgStyle

        _emit_svg(bundle, curves, "theory_mse_ratio",
                  labels=[f"rho={r:g}" for r in rhos],
                  style=SvgStyle(title="model MSE ratio", ylabel="MSE ratio"))

    if args.minavgmax:
        mc = sigplot.mse_monte_carlo(pnl, sigplot.MonteCarloConfig(
            b=cfg.b, seed=cfg.seed, group_mode=cfg.group_mode, k_max=cfg.kmax,
            membership_fraction=cfg.membership_fraction))
        ratio = sigplot.to_ratio(mc)
        _emit_plot(bundle, ratio, "minavgmax_mse_ratio")
        from .svg import SvgStyle

        _emit_svg(bundle, ratio, "minavgmax_mse_ratio",
                  style=SvgStyle(title="min/avg/max MSE ratio", ylabel="MSE ratio"))

    bundle.write()
    return 1 if bundle.warnings else 0


def _read_factor_params(path):
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    return panel_mod.FactorParams(
        loadings=np.array(d["loadings"], dtype=np.float64),
        ar_coef=float(d["ar_coef"]),
        shock_var=float(d["shock_var"]),
        idio_vars=np.array(d["idio_vars"], dtype=np.float64),
    )


def cmd_weights(args):
    cfg = build_config(args)
    cov_path = Path(args.cov)
    if not cov_path.exists():
        raise CrowdsigError(f"covariance file not found: {cov_path}")
    sigma = cio.read_covariance_csv(cov_path)
    w = equicorr.optimal_weights(sigma)
    for i, wi in enumerate(w, start=1):
        print(f"{i},{cio.fmt(wi)}")
    if args.out:
        cfg.out.mkdir(parents=True, exist_ok=True)
        bundle = Bundle(cfg, [cov_path])
        if "csv" in cfg.formats:
            bundle.add(cio.write_curve_csv(
                cfg.out / "weights.csv", ["forecaster", "weight"],
                [np.arange(1, w.size + 1), w]))
        if "json" in cfg.formats:
            path = cfg.out / "weights.json"
            with open(path, "w", encoding="utf-8") as fh:
                json.dump({"weights": [float(x) for x in w]}, fh, indent=1)
                fh.write("\n")
            bundle.add(path)
        bundle.write()
    return 0


def cmd_factor(args):
    cfg = build_config(args)
    if not args.params and not args.panel:
        raise CrowdsigError("factor command needs --params and/or --panel")
    cfg.out.mkdir(parents=True, exist_ok=True)
    inputs = [Path(p) for p in ([args.params] if args.params else []) +
              (list(args.panel) if args.panel else [])]
    for p in inputs:
        if not p.exists():
            raise CrowdsigError(f"input file not found: {p}")
    bundle = Bundle(cfg, inputs)

    if args.params:
        params = _read_factor_params(Path(args.params))
        implied = factor_mod.implied_moments(params)
        if "csv" in cfg.formats:
            bundle.add(cio.write_curve_csv(
                cfg.out / "implied_variances.csv", ["forecaster", "variance"],
                [np.arange(1, params.n + 1), implied.variances]))
            n = params.n
            rows_i = np.repeat(np.arange(1, n + 1), n)
            rows_j = np.tile(np.arange(1, n + 1), n)
            bundle.add(cio.write_curve_csv(
                cfg.out / "implied_correlation.csv", ["i", "j", "correlation"],
                [rows_i, rows_j, implied.correlation.ravel()]))
        if "json" in cfg.formats:
            check = factor_mod.check_restrictions(params)
            path = cfg.out / "restrictions.json"
            with open(path, "w", encoding="utf-8") as fh:
                json.dump({
                    "weak": bool(check.weak),
                    "strong": bool(check.strong),
                    "var_factor": implied.var_factor,
                }, fh, indent=1, sort_keys=True)
                fh.write("\n")
            bundle.add(path)

    if args.panel:
        for p in args.panel:
            pnl, _meta = cio.read_panel(Path(p))
            grid = factor_mod.deviation_grid(panel_mod.sample_moments(pnl))
            stem = Path(p).stem
            if "csv" in cfg.formats:
                bundle.add(cio.write_deviation_grid_csv(grid, cfg.out / f"{stem}_grid.csv"))
            _emit_svg(bundle, grid, f"{stem}_grid")

    bundle.write()
    return 1 if bundle.warnings else 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="INI config file")
    p.add_argument("--out", help="output directory (default: out)")
    p.add_argument("--formats", help="comma list of csv,json,svg")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--b", type=int, help="Monte Carlo replications")
    p.add_argument("--kmax", type=int, help="largest group size")


def make_parser():
    parser = argparse.ArgumentParser(
        prog="crowdsig",
        description="Crowd size signature plots for forecast-error panels",
    )
    parser.add_argument("--version", action="version", version=f"crowdsig {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="levels + realizations -> error panels")
    _add_common(p)
    p.add_argument("--levels", required=True, help="survey level forecasts CSV")
    p.add_argument("--realizations", required=True, help="realized growth CSV")
    p.add_argument("--variable", help="level column base name (default RGDP)")
    p.add_argument("--horizons", help="comma list from 1..4 (default 1,2,3,4)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("signature", help="direct signature plots for panels")
    _add_common(p)
    p.add_argument("--panel", nargs="+", required=True, help="panel CSV file(s)")
    p.add_argument("--methods", help="comma list of exact,monte_carlo,closed_form")
    p.add_argument("--group-mode", dest="group_mode",
                   choices=("per_period", "fixed_group"))
    p.set_defaults(func=cmd_signature)

    p = sub.add_parser("estimate", help="fit the equicorrelation model")
    _add_common(p)
    p.add_argument("--panel", nargs="+", required=True, help="panel CSV file(s)")
    p.add_argument("--b-boot", dest="b_boot", type=int, help="bootstrap replicates")
    p.add_argument("--block-length", dest="block_length", type=int,
                   help="moving-block bootstrap block length")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="synthetic panels and model curves")
    _add_common(p)
    p.add_argument("--dgp", choices=("equicorr", "factor"), default="equicorr")
    p.add_argument("--n", type=int, default=40, help="forecasters")
    p.add_argument("--t", type=int, default=160, help="periods")
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--params", help="factor params JSON (for --dgp factor)")
    p.add_argument("--theory", help="comma list of rho values for model curves")
    p.add_argument("--minavgmax", action="store_true",
                   help="emit the min/avg/max Monte Carlo triple")
    p.add_argument("--group-mode", dest="group_mode",
                   choices=("per_period", "fixed_group"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("weights", help="optimal combining weights for a covariance")
    _add_common(p)
    p.add_argument("--cov", required=True, help="covariance matrix CSV")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("factor", help="implied moments and deviation grids")
    _add_common(p)
    p.add_argument("--params", help="factor params JSON")
    p.add_argument("--panel", nargs="*", help="panel CSV file(s) for the grid")
    p.set_defaults(func=cmd_factor)

    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CrowdsigError, OSError, ValueError, KeyError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
