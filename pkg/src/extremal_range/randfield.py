"""Simulation of Gaussian-type random fields on a square grid.

Fields are sampled by a dense Cholesky factor of the Matern covariance. The
grid points are ordered with the origin first, so the leading column of the
factor is the origin covariance column ``c`` and the trailing block is the
Cholesky factor of ``C - c c^T``. One factorization therefore serves both
unconditional draws and draws conditioned on the value at the origin.

Randomness: every replicate and every component draws from its own stream,
``SeedSequence([root, replicate, component])``, so results never depend on
batching order or on how replicates are spread over threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import numerics
from .exceptions import (ConditioningError, DomainError, GridSizeError, NotPositiveDefiniteError,
                         NumericalError)
from .numerics import MaternParams

DEFAULT_MAX_POINTS = 16384
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)
MAX_PROPOSALS = 10 ** 6

# stream label for the origin / auxiliary draws of a replicate
AUX_STREAM = 1000
_BATCH = 256


@dataclass(frozen=True)
class GridSpec:
    """Odd-sized square lattice centred on the origin."""

    n_side: int = 61
    spacing: float = 1.0 / 60.0

    def __post_init__(self):
        if int(self.n_side) != self.n_side or self.n_side < 1 or self.n_side % 2 == 0:
            raise DomainError(f"n_side must be a positive odd integer, got {self.n_side}")
        if not self.spacing > 0:
            raise DomainError("spacing must be positive")

    @property
    def center_index(self):
        return (self.n_side - 1) // 2

    @property
    def n_points(self):
        return self.n_side * self.n_side

    @property
    def extent(self):
        return (self.n_side - 1) * self.spacing

    @property
    def inradius(self):
        """Distance from the origin to the outermost pixel centres."""
        return self.center_index * self.spacing

    def offsets(self):
        """Integer row/column offsets from the origin, each of shape (n, n)."""
        a = np.arange(self.n_side) - self.center_index
        return np.meshgrid(a, a, indexing="ij")


@dataclass(frozen=True)
class RngSeed:
    """Root seed; streams are labelled by (replicate, component)."""

    root: int

    def __post_init__(self):
        if int(self.root) != self.root or not 0 <= self.root < 2 ** 64:
            raise DomainError("seed must be an unsigned 64-bit integer")

    def generator(self, replicate=0, component=0):
        ss = np.random.SeedSequence([int(self.root), int(replicate), int(component)])
        return np.random.Generator(np.random.PCG64(ss))


def _as_seed(seed):
    return seed if isinstance(seed, RngSeed) else RngSeed(int(seed))


def _open_uniform(rng, size=None):
    """Uniform draws on the open interval (0, 1)."""
    u = rng.random(size)
    while np.any(u == 0.0):
        u = np.where(u == 0.0, rng.random(size), u)
    return u


def _truncated_normal_above(rng, lower):
    """N(0, 1) conditioned on exceeding ``lower`` by inversion in the upper tail."""
    q = float(numerics.std_normal_sf(lower))
    if q == 0.0:
        raise ConditioningError(f"conditioning too deep: P(G > {lower:g}) underflows")
    return float(numerics.std_normal_isf(_open_uniform(rng) * q))


# --------------------------------------------------------------------------
# field models

@dataclass(frozen=True)
class Gaussian:
    matern: MaternParams = MaternParams()
    tag = "gaussian"
    n_components = 1

    def marginal_cdf(self, x):
        return numerics.std_normal_cdf(x)

    def marginal_sf(self, x):
        return numerics.std_normal_sf(x)

    def quantile(self, p):
        return float(numerics.std_normal_quantile(p))

    def derive(self, comps, aux=None):
        return comps[0]

    def draw_origin(self, rng, u):
        return np.array([_truncated_normal_above(rng, u)]), None


@dataclass(frozen=True)
class Student:
    """Student t field ``sqrt(k) G_{k+1} / sqrt(G_1^2 + ... + G_k^2)``."""

    dof: int = 3
    matern: MaternParams = MaternParams()
    tag = "student"

    @property
    def n_components(self):
        return self.dof + 1

    def marginal_cdf(self, x):
        self._need_k3()
        return numerics.student_cdf_k3(x)

    def marginal_sf(self, x):
        self._need_k3()
        return numerics.student_sf_k3(x)

    def quantile(self, p):
        self._need_k3()
        return float(numerics.student_quantile_k3(p))

    def _need_k3(self):
        if self.dof != 3:
            raise DomainError("closed-form Student law only for 3 degrees of freedom")

    def derive(self, comps, aux=None):
        denom = np.sqrt(sum(c * c for c in comps[:-1]))
        if np.any(denom == 0):
            raise NumericalError("Student denominator vanished; resample the component fields")
        return math.sqrt(self.dof) * comps[-1] / denom

    def draw_origin(self, rng, u):
        # propose the chi radius with its direction, accept with the tilt
        # P(G_last > u R / sqrt(k)), then draw G_last from the truncated law
        k = self.dof
        bound = 0.5 if u >= 0 else 1.0
        tried = 0
        while tried < MAX_PROPOSALS:
            g = rng.standard_normal((1024, k))
            radius = np.sqrt((g * g).sum(axis=1))
            tilt = numerics.std_normal_sf(u * radius / math.sqrt(k))
            ok = np.flatnonzero(_open_uniform(rng, 1024) * bound < tilt)
            if ok.size:
                i = ok[0]
                last = _truncated_normal_above(rng, u * radius[i] / math.sqrt(k))
                return np.append(g[i], last), None
            tried += 1024
        raise ConditioningError(
            f"conditioning too deep: no acceptance in {tried} proposals (acceptance < {1 / tried:.1e})")


@dataclass(frozen=True)
class ChiSq:
    """Chi-square field ``G_1^2 + ... + G_k^2``."""

    dof: int = 3
    matern: MaternParams = MaternParams()
    tag = "chisq"

    @property
    def n_components(self):
        return self.dof

    def _need_k3(self):
        if self.dof != 3:
            raise DomainError("closed-form chi-square law only for 3 degrees of freedom")

    def marginal_cdf(self, x):
        self._need_k3()
        return numerics.chisq_cdf_k3(np.maximum(x, 0.0))

    def marginal_sf(self, x):
        self._need_k3()
        return numerics.chisq_sf_k3(np.maximum(x, 0.0))

    def quantile(self, p):
        self._need_k3()
        return float(numerics.chisq_quantile_k3(p))

    def derive(self, comps, aux=None):
        return sum(c * c for c in comps)

    def draw_origin(self, rng, u):
        self._need_k3()
        q = self.marginal_sf(u)
        value = float(numerics.chisq_isf_k3(_open_uniform(rng) * q)) if q < 1 else None
        g = rng.standard_normal(self.dof)
        if value is None:
            return g, None
        return g * math.sqrt(value) / np.sqrt(g @ g), None


@dataclass(frozen=True)
class ScaleMixture:
    """``Lambda * G`` with ``Lambda`` Pareto(alpha) on [1, inf), independent of G."""

    alpha: float = 2.0
    matern: MaternParams = MaternParams()
    tag = "mixture"
    n_components = 1

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError("alpha must be positive")

    def marginal_cdf(self, x):
        return numerics.mixture_marginal_cdf(x, self.alpha)

    def marginal_sf(self, x):
        return numerics.mixture_marginal_sf(x, self.alpha)

    def quantile(self, p):
        return float(numerics.mixture_marginal_quantile(p, self.alpha))

    def derive(self, comps, aux):
        lam = np.asarray(aux, dtype=float)
        return lam.reshape(lam.shape + (1,) * (comps[0].ndim - lam.ndim)) * comps[0]

    def pareto(self, uniforms):
        return (1.0 - uniforms) ** (-1.0 / self.alpha)

    def draw_origin(self, rng, u):
        # Lambda from its exceedance-tilted law by rejection from the prior
        # (acceptance P(G > u / Lambda) / bound), then G truncated above u / Lambda
        bound = 0.5 if u >= 0 else float(numerics.std_normal_sf(u))
        tried = 0
        while tried < MAX_PROPOSALS:
            lam = self.pareto(rng.random(1024))
            tilt = numerics.std_normal_sf(u / lam)
            ok = np.flatnonzero(_open_uniform(rng, 1024) * bound < tilt)
            if ok.size:
                lam0 = float(lam[ok[0]])
                return np.array([_truncated_normal_above(rng, u / lam0)]), lam0
            tried += 1024
        raise ConditioningError(
            f"conditioning too deep: no acceptance in {tried} proposals (acceptance < {1 / tried:.1e})")


@dataclass(frozen=True)
class PolkaDot:
    """Exponential height with a randomly rotated lattice of small holes."""

    tag = "polkadot"
    matern = None
    n_components = 0

    def quantile(self, p):
        raise DomainError("polka-dot marginal has an atom; use absolute thresholds")


MODEL_TAGS = ("gaussian", "student", "chisq", "mixture", "polkadot")


def make_model(tag, nu=2.5, ell=0.1, dof=3, alpha=2.0):
    """Build a field model from its tag and flat hyperparameters."""
    if tag == "polkadot":
        return PolkaDot()
    matern = MaternParams(nu, ell)
    if tag == "gaussian":
        return Gaussian(matern)
    if tag == "student":
        return Student(int(dof), matern)
    if tag == "chisq":
        return ChiSq(int(dof), matern)
    if tag == "mixture":
        return ScaleMixture(float(alpha), matern)
    raise DomainError(f"unknown model {tag!r}; expected one of {MODEL_TAGS}")


@dataclass
class GridField:
    """One realization on a grid; ``values`` has shape (n_side, n_side)."""

    spec: GridSpec
    values: np.ndarray
    model: str = "gaussian"
    seed: int = 0
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.spec.n_side, self.spec.n_side)
        if not np.all(np.isfinite(self.values)):
            raise DomainError("field values must be finite")

    @property
    def origin_value(self):
        c = self.spec.center_index
        return float(self.values[c, c])


# --------------------------------------------------------------------------
# covariance and factorization

def _origin_first_order(spec):
    o = spec.center_index * spec.n_side + spec.center_index
    rest = np.delete(np.arange(spec.n_points), o)
    return np.concatenate(([o], rest))


def build_covariance(spec, params, max_points=DEFAULT_MAX_POINTS, order=None):
    """Dense Matern covariance of the grid points (row-major unless ``order``)."""
    if spec.n_points > max_points:
        side = int(math.isqrt(max_points))
        side -= 1 - side % 2
        raise GridSizeError(
            f"{spec.n_points} grid points exceed the budget of {max_points}; "
            f"try n_side <= {side}")
    ii, jj = spec.offsets()
    ii, jj = ii.ravel().astype(float), jj.ravel().astype(float)
    if order is not None:
        ii, jj = ii[order], jj[order]
    d = np.subtract.outer(ii, ii)
    d *= d
    dj = np.subtract.outer(jj, jj)
    dj *= dj
    d += dj
    del dj
    np.sqrt(d, out=d)
    d *= spec.spacing
    cov = matern_correlation_inplace(d, params)
    np.fill_diagonal(cov, 1.0)
    return cov


def matern_correlation_inplace(d, params):
    # same closed forms as numerics.matern_correlation, without temporaries
    if params.nu not in numerics.SUPPORTED_NU:
        numerics.matern_correlation(0.0, params)  # raises
    d *= math.sqrt(2.0 * params.nu) / params.ell
    x = d
    e = np.exp(-x)
    if params.nu == 1.5:
        poly = 1.0 + x
    elif params.nu == 2.5:
        poly = x * x
        poly *= 1.0 / 3.0
        poly += x
        poly += 1.0
    else:
        poly = x ** 3 / 15.0 + 0.4 * x * x + x + 1.0
    poly *= e
    return poly


@dataclass
class LowerFactor:
    lower: np.ndarray
    jitter: float


def cholesky_factor(matrix):
    """Lower Cholesky factor with the smallest jitter from the ladder that works."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DomainError("matrix must be square")
    if not np.allclose(matrix, matrix.T, rtol=0, atol=1e-12):
        raise DomainError("matrix must be symmetric")
    n = matrix.shape[0]
    for jitter in JITTER_LADDER:
        try:
            lower = np.linalg.cholesky(matrix + jitter * np.eye(n) if jitter else matrix)
        except np.linalg.LinAlgError:
            continue
        return LowerFactor(lower, jitter)
    raise NotPositiveDefiniteError(
        f"matrix is not positive definite (jitter up to {JITTER_LADDER[-1]:g} tried)")


@dataclass
class GridFactor:
    """Cholesky factor of the grid covariance in origin-first ordering."""

    spec: GridSpec
    params: MaternParams
    lower: np.ndarray
    order: np.ndarray
    jitter: float

    def to_grid(self, permuted):
        """Map an array (N, m) in factor ordering to fields of shape (m, n, n)."""
        out = np.empty_like(permuted)
        out[self.order] = permuted
        n = self.spec.n_side
        return out.T.reshape(-1, n, n)


def factorize_grid(spec, params, max_points=DEFAULT_MAX_POINTS):
    order = _origin_first_order(spec)
    cov = build_covariance(spec, params, max_points=max_points, order=order)
    f = cholesky_factor(cov)
    del cov
    return GridFactor(spec, params, f.lower, order, f.jitter)


# --------------------------------------------------------------------------
# sampling

def _standard_normals(factor, seed, replicates, component):
    n = factor.spec.n_points
    z = np.empty((n, len(replicates)))
    for k, rep in enumerate(replicates):
        z[:, k] = seed.generator(rep, component).standard_normal(n)
    return z


def _gaussian_batch(factor, seed, replicates, component, origin=None):
    """Gaussian fields (m, n, n); optionally pinned to ``origin`` values at s = 0."""
    out = []
    for start in range(0, len(replicates), _BATCH):
        reps = replicates[start:start + _BATCH]
        z = _standard_normals(factor, seed, reps, component)
        if origin is not None:
            x0 = origin[start:start + _BATCH]
            z[0] = x0 / factor.lower[0, 0]
        vals = factor.lower @ z
        if origin is not None:
            vals[0] = x0
        out.append(factor.to_grid(vals))
    n = factor.spec.n_side
    return np.concatenate(out) if out else np.empty((0, n, n))


def sample_gaussian(factor, seed, replicate=0, component=0):
    """One Gaussian field ``L z`` from the stream (seed, replicate, component)."""
    seed = _as_seed(seed)
    vals = _gaussian_batch(factor, seed, [replicate], component)[0]
    return GridField(factor.spec, vals, "gaussian", seed.root)


def derive_field(model, gaussians, aux=None):
    """Apply the model's pixel-wise transform to its Gaussian components."""
    comps = [g.values if isinstance(g, GridField) else np.asarray(g, dtype=float) for g in gaussians]
    if len(comps) != model.n_components:
        raise DomainError(f"{model.tag} needs {model.n_components} Gaussian components, got {len(comps)}")
    if isinstance(model, ScaleMixture) and aux is None:
        raise DomainError("scale mixture needs the Pareto multiplier")
    vals = model.derive(comps, aux)
    if isinstance(gaussians[0], GridField):
        g = gaussians[0]
        return GridField(g.spec, vals, model.tag, g.seed)
    return vals


def sample_fields(model, factor, seed, replicates, threshold=None):
    """Fields for the given replicate indices, shape (m, n, n).

    With ``threshold`` set, each field is drawn from the law conditioned on
    exceeding it at the origin: the component values at the origin are drawn
    first, then every component is extended by conditional simulation.
    """
    if isinstance(model, PolkaDot):
        raise DomainError("use sample_polkadot for the polka-dot field")
    seed = _as_seed(seed)
    replicates = list(replicates)
    m = len(replicates)
    k = model.n_components
    if threshold is None or threshold == -np.inf:
        comps = [_gaussian_batch(factor, seed, replicates, c) for c in range(k)]
        aux = None
        if isinstance(model, ScaleMixture):
            aux = np.array([model.pareto(_open_uniform(seed.generator(r, AUX_STREAM)))
                            for r in replicates])
        return model.derive(comps, aux) if k > 1 or aux is not None else comps[0]
    origin = np.empty((m, k))
    aux = np.empty(m)
    for i, rep in enumerate(replicates):
        origin[i], lam = model.draw_origin(seed.generator(rep, AUX_STREAM), float(threshold))
        aux[i] = np.nan if lam is None else lam
    comps = [_gaussian_batch(factor, seed, replicates, c, origin=origin[:, c]) for c in range(k)]
    vals = model.derive(comps, aux if isinstance(model, ScaleMixture) else None)
    c = factor.spec.center_index
    bad = ~(vals[:, c, c] > threshold)
    if np.any(bad):
        raise NumericalError("conditioned field failed to exceed the threshold at the origin")
    return vals


def sample_conditional_exceedance(model, factor, threshold, seed, replicate=0):
    """One field conditioned on exceeding ``threshold`` at the origin."""
    seed = _as_seed(seed)
    vals = sample_fields(model, factor, seed, [replicate], threshold)[0]
    return GridField(factor.spec, vals, model.tag, seed.root, {"threshold": threshold})


def quantile_threshold(model, p):
    """Marginal ``p``-quantile of the model (constant in space)."""
    if not 0 < p < 1:
        raise DomainError("p must lie in (0, 1)")
    return model.quantile(p)


# --------------------------------------------------------------------------
# polka-dot counterexample field

@dataclass(frozen=True)
class PolkaDotDraw:
    """Random ingredients: height ``E``, rotation ``theta``, lattice shift ``U``."""

    height: float
    theta: float
    shift: tuple

    @property
    def hole_radius(self):
        """Hole radius in lattice coordinates."""
        return 3.0 ** (-self.height)

    def _lattice_coords(self, x, y):
        c, s = math.cos(self.theta), math.sin(self.theta)
        e = self.height
        return e * (c * x - s * y) - self.shift[0], e * (s * x + c * y) - self.shift[1]

    def values(self, x, y):
        """Field value at points (x, y) in domain units."""
        a, b = self._lattice_coords(np.asarray(x, float), np.asarray(y, float))
        r2 = self.hole_radius ** 2
        count = np.zeros(np.broadcast(a, b).shape)
        fa, fb = np.floor(a), np.floor(b)
        # only the four surrounding lattice points can lie within distance < 1
        for da in (0.0, 1.0):
            for db in (0.0, 1.0):
                count += ((a - fa - da) ** 2 + (b - fb - db) ** 2 < r2)
        return self.height * (1.0 - count)

    def origin_range(self):
        """Exact distance from the origin to the nearest hole, in domain units."""
        best = math.inf
        for qa in (-1.0, 0.0):
            for qb in (-1.0, 0.0):
                d = math.hypot(qa + self.shift[0], qb + self.shift[1])
                best = min(best, max(0.0, d - self.hole_radius))
        return best / self.height


def draw_polkadot(rng, threshold=None):
    """Draw the ingredients, optionally conditioned on ``X(0) > threshold > 0``."""
    for _ in range(MAX_PROPOSALS):
        e = rng.exponential(1.0)
        if threshold is not None and threshold > 0:
            e += threshold
        draw = PolkaDotDraw(float(e), float(rng.uniform(0.0, 2.0 * math.pi)),
                            tuple(float(v) for v in rng.random(2)))
        if threshold is None or float(draw.values(0.0, 0.0)) > threshold:
            return draw
    raise ConditioningError("conditioning too deep for the polka-dot field")


def sample_polkadot(spec, seed, replicate=0, threshold=None):
    seed = _as_seed(seed)
    draw = draw_polkadot(seed.generator(replicate, AUX_STREAM), threshold)
    ii, jj = spec.offsets()
    # row index runs along y, column index along x
    vals = draw.values(jj * spec.spacing, ii * spec.spacing)
    return GridField(spec, vals, "polkadot", seed.root, {"draw": draw})


# --------------------------------------------------------------------------
# estimator-style front end

class FieldSimulator(BaseEstimator):
    """Grid simulator for the Gaussian-type models.

    ``fit`` factorizes the covariance; ``sample`` returns an array of fields
    of shape (n_samples, n_side, n_side), optionally conditioned on
    exceedance of ``threshold`` at the origin.
    """

    def __init__(self, model="gaussian", n_side=61, spacing=1.0 / 60.0, nu=2.5, ell=0.1,
                 dof=3, alpha=2.0, max_points=DEFAULT_MAX_POINTS):
        self.model = model
        self.n_side = n_side
        self.spacing = spacing
        self.nu = nu
        self.ell = ell
        self.dof = dof
        self.alpha = alpha
        self.max_points = max_points

    def fit(self, X=None, y=None):
        self.model_ = make_model(self.model, self.nu, self.ell, self.dof, self.alpha)
        self.spec_ = GridSpec(self.n_side, self.spacing)
        if isinstance(self.model_, PolkaDot):
            self.factor_ = None
        else:
            self.factor_ = factorize_grid(self.spec_, self.model_.matern, self.max_points)
        return self

    def sample(self, n_samples, seed, threshold=None, start=0):
        reps = range(start, start + n_samples)
        if isinstance(self.model_, PolkaDot):
            return np.stack([sample_polkadot(self.spec_, seed, r, threshold).values for r in reps])
        return sample_fields(self.model_, self.factor_, seed, reps, threshold)

    def threshold_for(self, p):
        return quantile_threshold(self.model_, p)
