"""Scenario runners producing the result tables.

Every runner is a pure function of its configuration: replicate ``i`` of a
model always draws from the stream ``(seed, i)``, whatever the threshold, so
cells at different thresholds share common random numbers and a rerun with
the same seed reproduces every table byte for byte. Cells of the
(model x threshold) grid are farmed out to a thread pool; results are
collected in cell order.
"""

from __future__ import annotations

import json
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import theory
from .estimators import (DEFAULT_BOOTSTRAP, cdf_direct, chi_curve, extremal_range_samples,
                         lkc_densities, prop3_check, slope_at_zero)
from .exceptions import ConfigError, DomainError, NumericalError
from .geometry import lattice_radii
from .numerics import second_spectral_moment
from .randfield import (MODEL_TAGS, GridSpec, PolkaDot, RngSeed, draw_polkadot, factorize_grid,
                        make_model, quantile_threshold, sample_fields)

# replicate offset for unconditioned fields drawn next to a conditioned run
UNCONDITIONED_OFFSET = 1 << 32
_CHUNK = 256


@dataclass
class ExperimentConfig:
    """Settings shared by all scenario runners.

    Exactly one of ``thresholds`` (absolute levels) and ``quantiles``
    (marginal probability levels) is used. Radii are in domain units;
    ``r_max`` is the slope fit window and ``radii_max`` the extent of the
    tabulated CDF.
    """

    models: tuple = ("gaussian",)
    n_side: int = 61
    spacing: float = 1.0 / 60.0
    nu: float = 2.5
    ell: float = 0.1
    dof: int = 3
    alpha: float = 2.0
    thresholds: tuple = ()
    quantiles: tuple = ()
    n_replicates: int = 1000
    seed: int = 0
    radii_max: float | None = None
    r_max: float | None = None
    slope_method: str = "polynomial"
    lattice_correction: bool = True
    n_bootstrap: int = DEFAULT_BOOTSTRAP
    lag: int = 1
    oracle_replicates: int = 1000
    outputs: str = "results"
    threads: int = 1

    def __post_init__(self):
        self.models = tuple(self.models)
        self.thresholds = tuple(float(v) for v in self.thresholds)
        self.quantiles = tuple(float(v) for v in self.quantiles)

    @property
    def mode(self):
        return "quantile" if self.quantiles else "absolute"

    @property
    def levels(self):
        return self.quantiles if self.quantiles else self.thresholds

    def grid(self):
        return GridSpec(self.n_side, self.spacing)

    def radii(self):
        rmax = self.radii_max if self.radii_max is not None else 15 * self.spacing
        return lattice_radii(self.spacing, rmax)

    def validate(self, require_levels=True):
        if not self.models:
            raise ConfigError("at least one model is required")
        for m in self.models:
            if m not in MODEL_TAGS:
                raise ConfigError(f"unknown model {m!r}; expected one of {MODEL_TAGS}")
        if self.thresholds and self.quantiles:
            raise ConfigError("give either thresholds or quantiles, not both")
        if require_levels and not self.levels:
            raise ConfigError("no threshold levels configured")
        if any(not 0 < p < 1 for p in self.quantiles):
            raise ConfigError("quantile levels must lie in (0, 1)")
        if any(not math.isfinite(u) for u in self.thresholds):
            raise ConfigError("thresholds must be finite")
        if self.n_replicates < 50:
            raise ConfigError(f"n_replicates must be at least 50, got {self.n_replicates}")
        if self.n_bootstrap < 10:
            raise ConfigError("n_bootstrap must be at least 10 for percentile bands")
        if self.threads < 1 or self.lag < 1:
            raise ConfigError("threads and lag must be at least 1")
        if self.oracle_replicates < 100:
            raise ConfigError("oracle_replicates must be at least 100")
        if self.slope_method not in ("polynomial", "spline"):
            raise ConfigError(f"unknown slope method {self.slope_method!r}")
        try:
            spec = self.grid()
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        rmax = self.radii()[-1] if self.radii().size else 0.0
        if rmax > spec.inradius:
            raise ConfigError("tabulated radii exceed the window inradius")
        return self


@dataclass
class ResultRow:
    model: str
    mode: str
    level: float
    threshold: float
    abscissa: float
    kind: str
    value: float
    ci_low: float
    ci_high: float
    theory: float
    theory_se: float
    n_replicates: int
    seed: int

    def __post_init__(self):
        if not self.ci_low <= self.value <= self.ci_high:
            raise NumericalError(f"interval [{self.ci_low}, {self.ci_high}] misses {self.value}")


@dataclass
class Table:
    """Named table with fixed column order."""

    name: str
    columns: tuple
    rows: list = field(default_factory=list)

    @classmethod
    def from_rows(cls, name, rows):
        cols = tuple(f.name for f in fields(ResultRow))
        return cls(name, cols, [tuple(getattr(r, c) for c in cols) for r in rows])

    def column(self, name):
        k = self.columns.index(name)
        return [row[k] for row in self.rows]

    def records(self):
        return [dict(zip(self.columns, row)) for row in self.rows]


@dataclass
class ExperimentResult:
    name: str
    config: ExperimentConfig | None
    tables: dict
    summary: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def write(self, outdir=None):
        """Write every table as CSV plus a JSON manifest; returns the paths."""
        from .io import write_table

        outdir = Path(outdir if outdir is not None else self.config.outputs)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = [write_table(outdir / f"{t.name}.csv", t) for t in self.tables.values()]
        from . import __version__

        manifest = {
            "experiment": self.name,
            "config": _jsonable(asdict(self.config)) if self.config else None,
            "seed": self.config.seed if self.config else self.summary.get("seed"),
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "wall_time_s": round(self.wall_time, 3),
            "tables": sorted(p.name for p in paths),
            "summary": _jsonable(self.summary),
        }
        mpath = outdir / f"{self.name}_manifest.json"
        mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return paths + [mpath]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj


def derived_seed(root, *labels):
    """Independent 64-bit root derived from ``root`` and integer labels."""
    state = np.random.SeedSequence([int(root), *map(int, labels)]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


# --------------------------------------------------------------------------
# shared machinery

def _build_models(cfg):
    out = {}
    for tag in cfg.models:
        model = make_model(tag, cfg.nu, cfg.ell, cfg.dof, cfg.alpha)
        if isinstance(model, PolkaDot):
            raise ConfigError("the polka-dot field runs through run_counterexample only")
        out[tag] = model
    return out


def _factors(models, spec):
    """One covariance factor per distinct Matern parameter set."""
    cache = {}
    for model in models.values():
        if model.matern not in cache:
            cache[model.matern] = factorize_grid(spec, model.matern)
    return {tag: cache[m.matern] for tag, m in models.items()}


def _cells(cfg, models):
    cells = []
    for tag in cfg.models:
        for level in cfg.levels:
            if cfg.mode == "quantile":
                u = float(quantile_threshold(models[tag], level))
                absc = -math.log1p(-level)
            else:
                u = absc = float(level)
            cells.append((tag, float(level), u, absc))
    return cells


def _map_cells(fn, cells, threads):
    if threads <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, cells))


def theory_slope(model, u, cfg, spec, factor=None):
    """Reference slope at zero and its standard error (zero for closed forms)."""
    if model.tag == "gaussian":
        return theory.gaussian_slope(u, second_spectral_moment(model.matern)), 0.0
    if model.tag == "mixture":
        return theory.mixture_slope(u, second_spectral_moment(model.matern), model.alpha), 0.0
    dens = theory.mc_lkc_oracle(model, u, cfg.oracle_replicates, spec,
                                derived_seed(cfg.seed, 1, MODEL_TAGS.index(model.tag)),
                                factor, cfg.lag)
    return dens.ratio, _ratio_se(dens)


def _ratio_se(dens):
    # delta method for 2 a / b, treating the two estimates as independent
    a, b = dens.c_dm1, dens.c_d
    if not b > 0:
        return float("inf")
    return 2.0 * math.hypot(dens.c_dm1_se / b, a * dens.c_d_se / (b * b))


def _conditioned(model, factor, seed, n, u):
    """Extremal-range samples and excursion masks of ``n`` conditioned fields."""
    spacing = factor.spec.spacing
    samples, masks = [], []
    for s in range(0, n, _CHUNK):
        vals = sample_fields(model, factor, seed, range(s, min(s + _CHUNK, n)), u)
        samples.append(extremal_range_samples(vals, u, spacing))
        masks.append(vals > u)
    return np.concatenate(samples), np.concatenate(masks)


def _unconditioned_masks(model, factor, seed, n, u):
    out = []
    for s in range(0, n, _CHUNK):
        reps = range(UNCONDITIONED_OFFSET + s, UNCONDITIONED_OFFSET + min(s + _CHUNK, n))
        out.append(sample_fields(model, factor, seed, reps) > u)
    return np.concatenate(out)


def _row(cfg, tag, level, u, absc, kind, est, ref, ref_se, n):
    return ResultRow(tag, cfg.mode, level, u, absc, kind, float(est.value), float(est.ci_low),
                     float(est.ci_high), float(ref), float(ref_se), int(n), int(cfg.seed))


def _cdf_rows(tag, level, u, cdf):
    return [(tag, level, u, float(r), float(p), float(lo), float(hi))
            for r, p, lo, hi in zip(cdf.radii, cdf.probs, cdf.ci_low, cdf.ci_high)]


CDF_COLUMNS = ("model", "level", "threshold", "r", "cdf", "ci_low", "ci_high")
CHI_COLUMNS = ("model", "level", "threshold", "r", "phi", "phi_ci_low", "phi_ci_high",
               "f", "f_ci_low", "f_ci_high")
PROP3_COLUMNS = ("model", "level", "threshold", "r", "cdf", "f", "slack", "tolerance", "ok")


def _chi_rows(tag, level, u, chi):
    return [(tag, level, u, float(r), float(a), float(b), float(c), float(d), float(e), float(g))
            for r, a, b, c, d, e, g in zip(chi.radii, chi.phi, chi.phi_ci_low, chi.phi_ci_high,
                                           chi.f, chi.f_ci_low, chi.f_ci_high)]


def _prop3_rows(tag, level, u, report):
    return [(tag, level, u, d["r"], d["cdf"], d["f"], d["slack"], d["tolerance"], int(d["ok"]))
            for d in report]


def _slope_cell(cfg, models, factors, spec, radii, with_chi):
    seed = RngSeed(cfg.seed)
    chi_radii = lattice_radii(spec.spacing, 10 * spec.spacing)

    def run(cell):
        tag, level, u, absc = cell
        model, factor = models[tag], factors[tag]
        samples, masks = _conditioned(model, factor, seed, cfg.n_replicates, u)
        cdf = cdf_direct(samples, radii, cfg.n_bootstrap, cfg.seed, spec.spacing)
        slope = slope_at_zero(cdf, cfg.r_max, cfg.slope_method, cfg.n_bootstrap, cfg.seed,
                              cfg.lattice_correction)
        ref, ref_se = theory_slope(model, u, cfg, spec, factor)
        out = {"slope": _row(cfg, tag, level, u, absc, "slope", slope, ref, ref_se, samples.size),
               "cdf": _cdf_rows(tag, level, u, cdf)}
        if with_chi:
            chi = chi_curve(masks, spec, chi_radii, cfg.n_bootstrap, cfg.seed,
                            cfg.lattice_correction)
            report = prop3_check(cdf, chi)
            out["chi"] = chi
            out["chi_rows"] = _chi_rows(tag, level, u, chi)
            out["prop3"] = _prop3_rows(tag, level, u, report)
            out["prop3_ok"] = all(d["ok"] for d in report)
            out["fprime"] = _row(cfg, tag, level, u, absc, "f_prime_at_0", chi.f_prime_at_0,
                                 -ref / math.pi, ref_se / math.pi, masks.shape[0])
        else:
            del masks
        return out

    return run


# --------------------------------------------------------------------------
# runners

def run_fig3(cfg):
    """Slope at zero against absolute thresholds, with curvature-density rows.

    Besides the slope from conditioned fields, each cell reports the ratio
    ``2 c_dm1 / c_d`` estimated from unconditioned fields of the same model.
    """
    cfg.validate()
    if cfg.mode != "absolute":
        raise ConfigError("run_fig3 takes absolute thresholds")
    t0 = time.perf_counter()
    spec, radii = cfg.grid(), cfg.radii()
    models = _build_models(cfg)
    factors = _factors(models, spec)
    cells = _cells(cfg, models)
    slope_cell = _slope_cell(cfg, models, factors, spec, radii, with_chi=False)

    def run(cell):
        out = slope_cell(cell)
        tag, level, u, absc = cell
        masks = _unconditioned_masks(models[tag], factors[tag], RngSeed(cfg.seed),
                                     cfg.n_replicates, u)
        dens = lkc_densities(masks, spec.spacing, cfg.lag)
        se = _ratio_se(dens)
        slope_row = out["slope"]
        ratio = dens.ratio
        out["lkc"] = ResultRow(tag, cfg.mode, level, u, absc, "lkc_ratio", ratio,
                               ratio - 1.96 * se, ratio + 1.96 * se, slope_row.theory,
                               slope_row.theory_se, masks.shape[0], cfg.seed)
        out["densities"] = dens
        return out

    results = _map_cells(run, cells, cfg.threads)
    rows = [r for res in results for r in (res["slope"], res["lkc"])]
    cdf = Table("fig3_cdf", CDF_COLUMNS, [row for res in results for row in res["cdf"]])
    return ExperimentResult("fig3", cfg, {"slope": Table.from_rows("fig3_slope", rows),
                                          "cdf": cdf},
                            wall_time=time.perf_counter() - t0)


def run_fig4(cfg):
    """Slope at zero against quantile levels; abscissa ``-log(1 - p)``.

    Each cell also fits the conditional exceedance curve from the same
    conditioned fields and checks the range-versus-exceedance inequality.
    """
    cfg.validate()
    if cfg.mode != "quantile":
        raise ConfigError("run_fig4 takes quantile levels")
    t0 = time.perf_counter()
    spec, radii = cfg.grid(), cfg.radii()
    models = _build_models(cfg)
    factors = _factors(models, spec)
    results = _map_cells(_slope_cell(cfg, models, factors, spec, radii, True),
                         _cells(cfg, models), cfg.threads)
    tables = {
        "slope": Table.from_rows("fig4_slope", [r["slope"] for r in results]),
        "cdf": Table("fig4_cdf", CDF_COLUMNS, [x for r in results for x in r["cdf"]]),
        "chi": Table("fig4_chi", CHI_COLUMNS, [x for r in results for x in r["chi_rows"]]),
        "prop3": Table("fig4_prop3", PROP3_COLUMNS, [x for r in results for x in r["prop3"]]),
    }
    summary = {"prop3_ok": all(r["prop3_ok"] for r in results)}
    return ExperimentResult("fig4", cfg, tables, summary, time.perf_counter() - t0)


def run_fig6(cfg):
    """Slope at zero of the conditional exceedance curve per quantile level.

    The theory column is the slope reference of :func:`run_fig4` times
    ``-1/pi``, computed by the same function.
    """
    cfg.validate()
    if cfg.mode != "quantile":
        raise ConfigError("run_fig6 takes quantile levels")
    t0 = time.perf_counter()
    spec, radii = cfg.grid(), cfg.radii()
    models = _build_models(cfg)
    factors = _factors(models, spec)
    results = _map_cells(_slope_cell(cfg, models, factors, spec, radii, True),
                         _cells(cfg, models), cfg.threads)
    tables = {
        "fprime": Table.from_rows("fig6_fprime", [r["fprime"] for r in results]),
        "chi": Table("fig6_chi", CHI_COLUMNS, [x for r in results for x in r["chi_rows"]]),
        "prop3": Table("fig6_prop3", PROP3_COLUMNS, [x for r in results for x in r["prop3"]]),
    }
    summary = {"prop3_ok": all(r["prop3_ok"] for r in results)}
    return ExperimentResult("fig6", cfg, tables, summary, time.perf_counter() - t0)


COUNTER_COLUMNS = ("threshold", "n_replicates", "bound", "max_range", "median_range",
                   "mean_range", "all_below", "seed")


def run_counterexample(n_replicates=200, levels=(2.0, 4.0, 8.0), seed=0, threads=1):
    """Exact ranges of the polka-dot field given ``X(0) > u`` at each level.

    Ranges are continuum distances from the origin to the nearest hole,
    computed from the random ingredients of each draw. A sample at or above
    ``sqrt(2) / u`` raises :class:`NumericalError`.
    """
    if n_replicates < 1:
        raise ConfigError("n_replicates must be positive")
    levels = tuple(float(u) for u in levels)
    if not levels or any(not u > 0 for u in levels):
        raise ConfigError("levels must be positive thresholds")
    t0 = time.perf_counter()
    root = RngSeed(seed)

    def run(u):
        r = np.array([draw_polkadot(root.generator(i, u_label(u)), u).origin_range()
                      for i in range(n_replicates)])
        bound = math.sqrt(2.0) / u
        if np.any(r >= bound):
            raise NumericalError(
                f"range {r.max():.6g} at u={u:g} reaches the bound {bound:.6g}")
        return (u, n_replicates, bound, float(r.max()), float(np.median(r)), float(r.mean()),
                1, int(seed))

    rows = _map_cells(run, list(levels), threads)
    med = [row[4] for row in rows]
    order = np.argsort(levels)
    trend = bool(np.all(np.diff(np.asarray(med)[order]) < 0))
    table = Table("counterexample", COUNTER_COLUMNS, rows)
    return ExperimentResult("counterexample", None, {"ranges": table},
                            {"median_decreasing": trend, "seed": int(seed)},
                            time.perf_counter() - t0)


def u_label(u):
    """Integer stream label for a threshold (its float bit pattern)."""
    return int(np.float64(u).view(np.uint64))


RV_COLUMNS = ("model", "level_a", "level_b", "max_gap", "max_excess", "within_bands")


def run_rv_stability(cfg):
    """Pairwise comparison of extremal-range CDFs across threshold levels.

    A pair is within bands when, at every radius, the gap between the two
    CDFs is at most the sum of their bootstrap half-widths. A model is
    stable when every pair is.
    """
    cfg.validate()
    if len(cfg.levels) < 3:
        raise ConfigError("at least three threshold levels are required")
    t0 = time.perf_counter()
    spec = cfg.grid()
    radii = lattice_radii(spec.spacing, cfg.radii_max if cfg.radii_max else 10 * spec.spacing)
    models = _build_models(cfg)
    factors = _factors(models, spec)
    seed = RngSeed(cfg.seed)

    def run(cell):
        tag, level, u, _ = cell
        samples, _ = _conditioned(models[tag], factors[tag], seed, cfg.n_replicates, u)
        return cdf_direct(samples, radii, cfg.n_bootstrap, cfg.seed, spec.spacing)

    cells = _cells(cfg, models)
    cdfs = _map_cells(run, cells, cfg.threads)
    rows, cdf_rows, stable = [], [], {}
    for tag in cfg.models:
        idx = [k for k, c in enumerate(cells) if c[0] == tag]
        stable[tag] = True
        for k in idx:
            cdf_rows += _cdf_rows(tag, cells[k][1], cells[k][2], cdfs[k])
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                ca, cb = cdfs[idx[a]], cdfs[idx[b]]
                gap = np.abs(ca.probs - cb.probs)
                band = 0.5 * (ca.ci_high - ca.ci_low) + 0.5 * (cb.ci_high - cb.ci_low)
                within = bool(np.all(gap <= band + 1e-12))
                stable[tag] &= within
                rows.append((tag, cells[idx[a]][1], cells[idx[b]][1], float(gap.max()),
                             float((gap - band).max()), int(within)))
    tables = {"pairs": Table("rv_stability", RV_COLUMNS, rows),
              "cdf": Table("rv_cdf", CDF_COLUMNS, cdf_rows)}
    return ExperimentResult("rv_stability", cfg, tables, {"stable": stable},
                            time.perf_counter() - t0)


def with_overrides(cfg, **kw):
    """Copy of ``cfg`` with the non-``None`` keyword values replaced."""
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
