"""Command-line front end.

Exit codes: 0 on success, 1 for invalid input or configuration, 2 when a
numerical routine fails. Data goes to files or standard output; diagnostics
go to standard error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, io, theory
from .config import load_config
from .estimators import cdf_direct, chi_curve, extremal_range_samples, slope_at_zero
from .exceptions import ConfigError, DomainError, ExtremalRangeError
from .experiments import (ExperimentConfig, Table, run_counterexample, run_fig3, run_fig4,
                          run_fig6, run_rv_stability, with_overrides)
from .geometry import ExcursionMask, distance_transform, lattice_radii
from .numerics import MaternParams, second_spectral_moment
from .randfield import (MODEL_TAGS, GridField, GridSpec, PolkaDot, RngSeed, factorize_grid,
                        make_model, quantile_threshold, sample_fields, sample_polkadot)

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _tags(text):
    tags = tuple(v.strip() for v in text.split(",") if v.strip())
    bad = [t for t in tags if t not in MODEL_TAGS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown model(s) {bad}; choose from {MODEL_TAGS}")
    return tags


def _model_flags(p, with_n=True):
    p.add_argument("--model", default="gaussian", choices=MODEL_TAGS)
    if with_n:
        p.add_argument("--n", type=int, default=61, help="pixels per side, odd (default 61)")
        p.add_argument("--spacing", type=float, default=1.0 / 60.0,
                       help="domain units per pixel (default 1/60)")
    p.add_argument("--nu", type=float, default=2.5, help="Matern smoothness (default 2.5)")
    p.add_argument("--ell", type=float, default=0.1, help="Matern length scale (default 0.1)")
    p.add_argument("--dof", type=int, default=3)
    p.add_argument("--alpha", type=float, default=2.0, help="Pareto exponent (default 2)")


def _level_flags(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--u", type=float, help="absolute threshold")
    g.add_argument("--p", type=float, help="marginal quantile level")


def _source_flags(p):
    p.add_argument("--in", dest="inputs", nargs="+", metavar="MASK",
                   help="mask files whose centre pixel exceeds (instead of simulating)")
    _model_flags(p)
    _level_flags(p)
    p.add_argument("--nreps", type=int, default=1000)
    p.add_argument("--seed", type=int, help="root seed (required when simulating)")
    p.add_argument("--nboot", type=int, default=1000)


def _experiment_flags(p, levels=True):
    p.add_argument("--config", type=Path, help="key = value configuration file")
    p.add_argument("--seed", type=int, required=True, help="root seed (required)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: number of cores)")
    p.add_argument("--nreps", type=int)
    p.add_argument("--models", type=_tags)
    if levels:
        p.add_argument("--thresholds", type=_floats)
        p.add_argument("--quantiles", type=_floats)
    p.add_argument("--out", type=Path, help="output directory")


def build_parser():
    ap = _Parser(prog="extremal-range", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="draw one field and write a grid file")
    _model_flags(p)
    _level_flags(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("mask", help="threshold a grid file into a mask file")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--u", type=float, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("edt", help="distance map of a mask file")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--outside", choices=("background", "ignore"), default="background")
    p.add_argument("--out", type=Path, help="output file (default: standard output)")

    p = sub.add_parser("cdf", help="extremal-range CDF with bootstrap bands")
    _source_flags(p)
    p.add_argument("--radii-max", type=float, help="largest radius (default 15 pixels)")
    p.add_argument("--out", type=Path, help="CSV file (default: standard output)")

    p = sub.add_parser("slope", help="slope of the extremal-range CDF at zero")
    _source_flags(p)
    p.add_argument("--rmax", type=float, help="fit window (default: leading radii with CDF at most 0.5)")
    p.add_argument("--method", choices=("polynomial", "spline"), default="polynomial")
    p.add_argument("--no-lattice", action="store_true", help="fit against nominal radii")

    p = sub.add_parser("chi", help="conditional exceedance curve")
    _source_flags(p)
    p.add_argument("--radii-max", type=float, help="largest radius (default 10 pixels)")
    p.add_argument("--out", type=Path, help="CSV file (default: standard output)")

    p = sub.add_parser("theory", help="closed-form reference values")
    what = p.add_mutually_exclusive_group(required=True)
    what.add_argument("--gaussian-slope", action="store_true")
    what.add_argument("--mixture-slope", action="store_true")
    what.add_argument("--limit-constant", action="store_true")
    what.add_argument("--spectral-moment", action="store_true")
    what.add_argument("--practical-cdf", type=float, metavar="R",
                      help="first-order CDF approximation of u R at R")
    _level_flags(p)
    p.add_argument("--nu", type=float, default=2.5)
    p.add_argument("--ell", type=float, default=0.1)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--digits", type=int, default=3)

    for name, hlp in (("fig3", "slope at zero against absolute thresholds"),
                      ("fig4", "slope at zero against quantile levels"),
                      ("fig6", "conditional exceedance slope against quantile levels"),
                      ("rv-stability", "threshold invariance of the range CDF")):
        _experiment_flags(sub.add_parser(name, help=hlp))

    p = sub.add_parser("counterexample", help="polka-dot field range bound")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--levels", type=_floats, default=(2.0, 4.0, 8.0))
    p.add_argument("--nreps", type=int, default=200)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", type=Path, default=Path("results"))

    sub.add_parser("selftest", help="fast invariant checks (under a minute)")
    return ap


# --------------------------------------------------------------------------
# handlers

def _model(args):
    return make_model(args.model, args.nu, args.ell, args.dof, args.alpha)


def _threshold(args, model):
    if args.p is not None:
        return float(quantile_threshold(model, args.p))
    return args.u


def _cmd_simulate(args):
    model = _model(args)
    spec = GridSpec(args.n, args.spacing)
    u = _threshold(args, model)
    if isinstance(model, PolkaDot):
        field = sample_polkadot(spec, args.seed, args.replicate, u)
    else:
        factor = factorize_grid(spec, model.matern)
        vals = sample_fields(model, factor, RngSeed(args.seed), [args.replicate], u)[0]
        field = GridField(spec, vals, model.tag, args.seed)
    io.write_grid(args.out, field)


def _cmd_mask(args):
    field = io.read_grid(args.input)
    mask = ExcursionMask(field.spec, field.values > args.u, args.u)
    io.write_mask(args.out, mask, field.model, field.seed)


def _cmd_edt(args):
    mask, _ = io.read_mask(args.input)
    dmap = distance_transform(mask, args.outside)
    if args.out:
        io.write_distance(args.out, dmap)
    else:
        for row in dmap.dist:
            print(" ".join(repr(float(v)) if math.isfinite(v) else "inf" for v in row))


def _masks_from_source(args):
    """Returns (masks (m, n, n), spec, samples)."""
    if args.inputs:
        loaded = [io.read_mask(p)[0] for p in args.inputs]
        spec = loaded[0].spec
        if any(m.spec != spec for m in loaded):
            raise DomainError("all mask files must share one grid")
        masks = np.stack([m.bits for m in loaded])
        c = spec.center_index
        if not masks[:, c, c].all():
            raise DomainError("every mask must contain its centre pixel")
        # masks are already thresholded: 0.5 separates the two values
        samples = extremal_range_samples(masks.astype(float), 0.5, spec.spacing)
        return masks, spec, samples
    if args.seed is None:
        raise ConfigError("--seed is required when simulating")
    model = _model(args)
    if isinstance(model, PolkaDot):
        raise ConfigError("use the counterexample subcommand for the polka-dot field")
    u = _threshold(args, model)
    if u is None:
        raise ConfigError("give --u or --p")
    if args.nreps < 1:
        raise ConfigError("--nreps must be positive")
    spec = GridSpec(args.n, args.spacing)
    factor = factorize_grid(spec, model.matern)
    vals = sample_fields(model, factor, RngSeed(args.seed), range(args.nreps), u)
    return vals > u, spec, extremal_range_samples(vals, u, spec.spacing)


def _emit(table, out):
    if out:
        io.write_table(out, table)
    else:
        print(",".join(table.columns))
        for row in table.rows:
            print(",".join(io._fmt(v) for v in row))


def _cmd_cdf(args):
    _, spec, samples = _masks_from_source(args)
    radii = lattice_radii(spec.spacing, args.radii_max or 15 * spec.spacing)
    cdf = cdf_direct(samples, radii, args.nboot, args.seed or 0, spec.spacing)
    rows = list(zip(cdf.radii.tolist(), cdf.probs.tolist(), cdf.ci_low.tolist(),
                    cdf.ci_high.tolist())) if args.nboot else \
        [(r, p, p, p) for r, p in zip(cdf.radii.tolist(), cdf.probs.tolist())]
    _emit(Table("cdf", ("r", "cdf", "ci_low", "ci_high"), rows), args.out)


def _cmd_slope(args):
    _, spec, samples = _masks_from_source(args)
    radii = lattice_radii(spec.spacing, args.rmax or 15 * spec.spacing)
    cdf = cdf_direct(samples, radii, args.nboot, args.seed or 0, spec.spacing)
    est = slope_at_zero(cdf, args.rmax, args.method, args.nboot, args.seed or 0, not args.no_lattice)
    print(f"slope={est.value:.6g} ci_low={est.ci_low:.6g} ci_high={est.ci_high:.6g} "
          f"n={est.n_replicates}")


def _cmd_chi(args):
    masks, spec, _ = _masks_from_source(args)
    radii = lattice_radii(spec.spacing, args.radii_max or 10 * spec.spacing)
    chi = chi_curve(masks, spec, radii, args.nboot, args.seed or 0)
    if args.nboot:
        rows = list(zip(*(a.tolist() for a in (chi.radii, chi.phi, chi.phi_ci_low,
                                                chi.phi_ci_high, chi.f, chi.f_ci_low,
                                                chi.f_ci_high))))
    else:
        rows = [(r, a, a, a, b, b, b) for r, a, b in zip(chi.radii, chi.phi, chi.f)]
    _emit(Table("chi", ("r", "phi", "phi_ci_low", "phi_ci_high", "f", "f_ci_low", "f_ci_high"),
                rows), args.out)
    fp = chi.f_prime_at_0
    print(f"f_prime_at_0={fp.value:.6g} ci_low={fp.ci_low:.6g} ci_high={fp.ci_high:.6g}",
          file=sys.stderr)


def _cmd_theory(args):
    lam = second_spectral_moment(MaternParams(args.nu, args.ell))
    need_u = args.gaussian_slope or args.mixture_slope
    if need_u and args.u is None and args.p is None:
        raise ConfigError("give --u or --p")
    if args.gaussian_slope:
        u = args.u if args.u is not None else float(make_model("gaussian").quantile(args.p))
        val = theory.gaussian_slope(u, lam, args.d)
    elif args.mixture_slope:
        u = args.u if args.u is not None else float(
            make_model("mixture", alpha=args.alpha).quantile(args.p))
        val = theory.mixture_slope(u, lam, args.alpha, args.d)
    elif args.limit_constant:
        val = theory.gaussian_limit_constant(lam, args.d)
    elif args.spectral_moment:
        val = lam
    else:
        val = theory.practical_cdf_approx(args.practical_cdf, lam, args.d)
    print(f"{val:.{args.digits}f}")


def _experiment_config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    over = {"seed": args.seed, "n_replicates": args.nreps, "models": args.models,
            "outputs": str(args.out) if args.out else None,
            "threads": args.threads if args.threads else (cfg.threads if args.config
                                                           else os.cpu_count() or 1)}
    levels = {"thresholds": getattr(args, "thresholds", None),
              "quantiles": getattr(args, "quantiles", None)}
    if levels["thresholds"] is not None and levels["quantiles"] is not None:
        raise ConfigError("give either --thresholds or --quantiles")
    if levels["thresholds"] is not None:
        over.update(thresholds=levels["thresholds"], quantiles=())
    if levels["quantiles"] is not None:
        over.update(quantiles=levels["quantiles"], thresholds=())
    return with_overrides(cfg, **over)


_DEFAULT_LEVELS = {
    "fig3": {"thresholds": (0.0, 1.0, 2.0)},
    "fig4": {"quantiles": (0.95, 0.99, 0.995), "models": ("gaussian", "mixture")},
    "fig6": {"quantiles": (0.9, 0.95, 0.99), "models": ("gaussian", "mixture"),
             "n_replicates": 500},
    "rv-stability": {"quantiles": (0.95, 0.99, 0.995), "models": ("mixture", "gaussian")},
}


def _cmd_experiment(args):
    cfg = _experiment_config(args)
    defaults = _DEFAULT_LEVELS[args.command]
    if not cfg.levels:
        fill = {k: v for k, v in defaults.items() if k in ("thresholds", "quantiles")}
        cfg = with_overrides(cfg, **fill)
    if not args.config and args.models is None and "models" in defaults:
        cfg = with_overrides(cfg, models=defaults["models"])
    if not args.config and args.nreps is None and "n_replicates" in defaults:
        cfg = with_overrides(cfg, n_replicates=defaults["n_replicates"])
    runner = {"fig3": run_fig3, "fig4": run_fig4, "fig6": run_fig6,
              "rv-stability": run_rv_stability}[args.command]
    result = runner(cfg)
    paths = result.write()
    for p in paths:
        print(p)
    for k, v in result.summary.items():
        print(f"{k}: {v}", file=sys.stderr)


def _cmd_counterexample(args):
    result = run_counterexample(args.nreps, args.levels, args.seed,
                                args.threads or os.cpu_count() or 1)
    for p in result.write(args.out):
        print(p)
    for row in result.tables["ranges"].records():
        print(f"u={row['threshold']:g} max={row['max_range']:.4g} bound={row['bound']:.4g} "
              f"median={row['median_range']:.4g}", file=sys.stderr)


def _cmd_selftest(args):
    from .selftest import run_selftest

    if not run_selftest(sys.stdout):
        return EXIT_NUMERIC
    return EXIT_OK


HANDLERS = {
    "simulate": _cmd_simulate, "mask": _cmd_mask, "edt": _cmd_edt, "cdf": _cmd_cdf,
    "slope": _cmd_slope, "chi": _cmd_chi, "theory": _cmd_theory, "fig3": _cmd_experiment,
    "fig4": _cmd_experiment, "fig6": _cmd_experiment, "rv-stability": _cmd_experiment,
    "counterexample": _cmd_counterexample, "selftest": _cmd_selftest,
}


def parse_and_dispatch(argv=None):
    """Run one command; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        code = HANDLERS[args.command](args)
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, ExtremalRangeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK if code is None else code


def main():
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
