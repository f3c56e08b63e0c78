"""Key-value configuration files.

One ``key = value`` per line; ``#`` starts a comment. Lists are
comma-separated. Unknown keys and invalid values are errors naming the line.

==================  ==================  =========================================
key                 default             meaning
==================  ==================  =========================================
models              gaussian            comma-separated model tags
nside               61                  odd pixel count per axis
spacing             0.016666666666667   domain units per pixel
nu                  2.5                 Matern smoothness (1.5, 2.5 or 3.5)
ell                 0.1                 Matern length scale
dof                 3                   degrees of freedom (student, chisq)
alpha               2.0                 Pareto exponent (mixture)
thresholds          (none)              absolute levels u
quantiles           (none)              probability levels p
nreps               1000                replicates per cell (>= 50)
seed                0                   root seed
radii_max           15 * spacing        largest tabulated radius
rmax                (adaptive)          slope fit window; default: CDF <= 0.5
method              polynomial          slope method: polynomial or spline
lattice             true                lattice-corrected abscissae
nboot               1000                bootstrap resamples
lag                 1                   crossing lag in pixels
oracle_reps         1000                replicates for Monte Carlo references
outputs             results             output directory
threads             1                   worker threads
==================  ==================  =========================================
"""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from .exceptions import ConfigError
from .experiments import ExperimentConfig


def _bool(text):
    t = text.lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    return None if text.lower() in ("none", "") else float(text)


def _list(conv):
    return lambda text: tuple(conv(v.strip()) for v in text.split(",") if v.strip())


# file key -> (field name, parser)
KEYS = {
    "models": ("models", _list(str)),
    "nside": ("n_side", int),
    "spacing": ("spacing", float),
    "nu": ("nu", float),
    "ell": ("ell", float),
    "dof": ("dof", int),
    "alpha": ("alpha", float),
    "thresholds": ("thresholds", _list(float)),
    "quantiles": ("quantiles", _list(float)),
    "nreps": ("n_replicates", int),
    "seed": ("seed", int),
    "radii_max": ("radii_max", _opt_float),
    "rmax": ("r_max", _opt_float),
    "method": ("slope_method", str),
    "lattice": ("lattice_correction", _bool),
    "nboot": ("n_bootstrap", int),
    "lag": ("lag", int),
    "oracle_reps": ("oracle_replicates", int),
    "outputs": ("outputs", str),
    "threads": ("threads", int),
}
_FIELD_TO_KEY = {f: k for k, (f, _) in KEYS.items()}

# single-field checks, so the error can point at the line
_CHECKS = {
    "n_replicates": (lambda v: v >= 50, "must be at least 50"),
    "n_side": (lambda v: v > 0 and v % 2 == 1, "must be a positive odd integer"),
    "spacing": (lambda v: v > 0, "must be positive"),
    "ell": (lambda v: v > 0, "must be positive"),
    "nu": (lambda v: v > 0, "must be positive"),
    "alpha": (lambda v: v > 0, "must be positive"),
    "seed": (lambda v: 0 <= v < 2 ** 64, "must be an unsigned 64-bit integer"),
    "n_bootstrap": (lambda v: v >= 10, "must be at least 10"),
    "threads": (lambda v: v >= 1, "must be at least 1"),
    "lag": (lambda v: v >= 1, "must be at least 1"),
    "oracle_replicates": (lambda v: v >= 100, "must be at least 100"),
    "quantiles": (lambda v: all(0 < p < 1 for p in v), "levels must lie in (0, 1)"),
    "slope_method": (lambda v: v in ("polynomial", "spline"), "must be polynomial or spline"),
}


def parse_config(text, source="<config>"):
    """Parse configuration text into an :class:`ExperimentConfig`."""
    values, seen = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        where = f"{source}:{lineno}"
        if not sep:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        if key not in KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{where}: duplicate key {key!r} (first on line {seen[key]})")
        name, conv = KEYS[key]
        try:
            parsed = conv(val)
        except ValueError as exc:
            raise ConfigError(f"{where}: invalid value for {key}: {exc}") from exc
        ok, msg = _CHECKS.get(name, (lambda v: True, ""))
        if not ok(parsed):
            raise ConfigError(f"{where}: {key} = {val} {msg}")
        values[name] = parsed
        seen[key] = lineno
    cfg = ExperimentConfig(**values)
    if cfg.thresholds and cfg.quantiles:
        raise ConfigError(f"{source}: give either thresholds or quantiles, not both")
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, str(path))


def _dump_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_dump_value(x) for x in v)
    return str(v)


def dump_config(cfg):
    """Canonical text form; ``parse_config(dump_config(c)) == c``."""
    lines = []
    for f in fields(ExperimentConfig):
        v = getattr(cfg, f.name)
        if v is None or v == ():
            continue
        lines.append(f"{_FIELD_TO_KEY[f.name]} = {_dump_value(v)}")
    return "\n".join(lines) + "\n"


def normalize_config(text):
    return dump_config(parse_config(text))
