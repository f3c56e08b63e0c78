"""Estimators for the extremal-range law, its slope at zero, curvature
densities and the conditional-exceedance curve.

Pixelization. On the grid the observed range is the distance to the nearest
non-exceeding pixel *centre*, which is never smaller than the distance to the
continuous boundary. For a locally straight boundary at distance ``R`` with
uniform orientation, the grid CDF at radius ``rho`` is ``F'(0)`` times the mean
support function of the lattice points inside ``B(0, rho)``, i.e. the hull
perimeter over ``2 pi``. With ``lattice_correction`` the slope fit uses these
effective radii as abscissae. The same reasoning applied to the disc averages
gives the lattice moments used by :func:`chi_curve`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import make_smoothing_spline
from scipy.spatial import ConvexHull
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import DomainError, EstimationError
from .geometry import _EPS, _fields_array, disc_fractions, erode_bits, lattice_radii, squared_edt
from .randfield import GridSpec
from .theory import beta_d

DEFAULT_BOOTSTRAP = 1000


@dataclass
class EmpiricalCdf:
    """Sampled distribution function of the extremal range.

    ``per_replicate`` keeps the raw ranges (``inf`` marks a censored
    replicate); ``boot`` holds bootstrap replicates of ``probs``.
    """

    radii: np.ndarray
    probs: np.ndarray
    per_replicate: np.ndarray | None = None
    ci_low: np.ndarray | None = None
    ci_high: np.ndarray | None = None
    boot: np.ndarray | None = field(default=None, repr=False)
    spacing: float | None = None

    def at(self, radii):
        if self.per_replicate is None:
            raise EstimationError("re-evaluation needs the per-replicate samples")
        return _ecdf(self.per_replicate[None], np.asarray(radii, float), self.spacing)[0]


@dataclass
class SlopeEstimate:
    value: float
    ci_low: float
    ci_high: float
    method: str
    n_replicates: int


@dataclass
class LkcDensities:
    """Curvature densities; ``ratio = 2 c_dm1 / c_d`` is the slope at zero."""

    c_dm1: float
    c_d: float
    c_dm1_se: float = float("nan")
    c_d_se: float = float("nan")

    @property
    def ratio(self):
        return 2.0 * self.c_dm1 / self.c_d if self.c_d > 0 else float("inf")


@dataclass
class ChiCurve:
    radii: np.ndarray
    phi: np.ndarray
    f: np.ndarray
    f_prime_at_0: SlopeEstimate
    phi_ci_low: np.ndarray | None = None
    phi_ci_high: np.ndarray | None = None
    f_ci_low: np.ndarray | None = None
    f_ci_high: np.ndarray | None = None


def _rng(seed, label):
    return np.random.default_rng(np.random.SeedSequence([int(seed), label]))


def _percentile_band(boot, confidence):
    a = 100 * (1 - confidence) / 2
    return np.percentile(boot, a, axis=0), np.percentile(boot, 100 - a, axis=0)


def _bracket(value, lo, hi):
    return min(lo, value), max(hi, value)


# --------------------------------------------------------------------------
# extremal-range samples and the direct CDF

def extremal_range_samples(fields, u, spacing):
    """Range at the origin for each field of shape (m, n, n).

    A replicate whose nearest non-exceedance is farther than the window
    inradius is censored and reported as ``inf``.
    """
    fields = _fields_array(fields)
    n = fields.shape[1]
    c = (n - 1) // 2
    if np.any(~(fields[:, c, c] > u)):
        raise DomainError("every field must exceed the threshold at the origin")
    d2 = squared_edt(~(fields > u), pad_seeds=True)[:, c, c]
    r = np.sqrt(d2)
    r[d2 > c * c + _EPS] = np.inf
    return r * spacing


def extremal_range_sample(field, u):
    """Distance from the origin to the nearest non-exceeding pixel of ``field``."""
    return float(extremal_range_samples(field.values[None], u, field.spec.spacing)[0])


def _ecdf(samples, radii, spacing):
    """Fraction of samples <= r, for each row of ``samples`` (B, m)."""
    tol = _EPS * (spacing if spacing else 1.0)
    s = np.sort(samples, axis=1)
    out = np.empty((s.shape[0], radii.size))
    for b in range(s.shape[0]):
        out[b] = np.searchsorted(s[b], radii + tol, side="right")
    return out / samples.shape[1]


def cdf_direct(samples, radii, n_bootstrap=DEFAULT_BOOTSTRAP, seed=0, spacing=None,
               confidence=0.95):
    """Empirical CDF of extremal-range samples with percentile bootstrap bands."""
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise EstimationError("no extremal-range samples")
    if np.any(samples < 0):
        raise DomainError("extremal-range samples must be nonnegative")
    radii = np.asarray(radii, dtype=float)
    probs = _ecdf(samples[None], radii, spacing)[0]
    boot = lo = hi = None
    if n_bootstrap:
        idx = _rng(seed, 1).integers(0, samples.size, size=(n_bootstrap, samples.size))
        boot = _ecdf(samples[idx], radii, spacing)
        lo, hi = _percentile_band(boot, confidence)
        # resampling cannot move an estimate of exactly 0 or 1; use the exact
        # binomial limit there instead of a zero-width band
        edge = (0.5 * (1 - confidence)) ** (1.0 / samples.size)
        lo = np.where(probs >= 1.0, np.minimum(lo, edge), lo)
        hi = np.where(probs <= 0.0, np.maximum(hi, 1.0 - edge), hi)
    return EmpiricalCdf(radii, probs, samples, lo, hi, boot, spacing)


# --------------------------------------------------------------------------
# erosion-based CDF

def _core_selector(spec, r_max):
    n = spec.n_side
    idx = np.arange(n)
    edge = np.minimum(idx, n - 1 - idx)
    e = np.minimum.outer(edge, edge)
    core = e * spec.spacing >= r_max - _EPS * spec.spacing
    if not core.any():
        raise EstimationError("largest radius leaves no core window")
    return core


def cdf_erosion(masks, spec, radii, n_bootstrap=DEFAULT_BOOTSTRAP, seed=0, confidence=0.95):
    """CDF as one minus the eroded share of the exceedance volume.

    Volumes are pooled over replicate masks (m, n, n) and restricted to the
    window shrunk by the largest radius, so no pixel in the core sees the
    window boundary within any evaluated radius.
    """
    masks = np.asarray(masks, dtype=bool)
    if masks.ndim == 2:
        masks = masks[None]
    radii = np.asarray(radii, dtype=float)
    core = _core_selector(spec, radii.max() if radii.size else 0.0)
    d2 = squared_edt(~masks, pad_seeds=True)[:, core]
    base = (d2 > 0).sum(axis=1).astype(float)
    if base.sum() == 0:
        raise EstimationError("zero exceedance volume in the core window")
    kept = np.stack([(d2 > (r / spec.spacing) ** 2 + _EPS).sum(axis=1) for r in radii], axis=1)
    probs = 1.0 - kept.sum(axis=0) / base.sum()
    boot = lo = hi = None
    if n_bootstrap:
        m = masks.shape[0]
        idx = _rng(seed, 2).integers(0, m, size=(n_bootstrap, m))
        denom = base[idx].sum(axis=1)
        denom[denom == 0] = np.nan
        boot = 1.0 - kept[idx].sum(axis=1) / denom[:, None]
        boot = boot[np.isfinite(boot).all(axis=1)]
        lo, hi = _percentile_band(boot, confidence)
    return EmpiricalCdf(radii, probs, None, lo, hi, boot, spec.spacing)


# --------------------------------------------------------------------------
# slope at zero

@lru_cache(maxsize=512)
def _effective_radius_px(rho2):
    """Mean support function of lattice points within sqrt(rho2) pixels."""
    k = int(math.isqrt(int(math.floor(rho2 + _EPS)))) + 1
    a = np.arange(-k, k + 1)
    i, j = np.meshgrid(a, a)
    sel = i * i + j * j <= rho2 + _EPS
    pts = np.c_[i[sel], j[sel]].astype(float)
    if len(pts) < 3:
        return 0.0
    return ConvexHull(pts).area / (2 * math.pi)


def effective_radius(r, spacing):
    """Lattice-corrected radius for the grid CDF evaluated at ``r``."""
    return _effective_radius_px(round((r / spacing) ** 2, 9)) * spacing


def _design(x, degree=3):
    return np.stack([x ** k for k in range(1, degree + 1)], axis=1)


def _fit_window(cdf, r_max, level, min_points):
    """Boolean selector of the radii used by the slope fit."""
    pos = cdf.radii > 0
    if r_max is not None:
        tol = _EPS * (cdf.spacing or 1.0)
        return pos & (cdf.radii <= r_max + tol)
    # largest run of leading radii whose CDF stays at or below ``level``
    idx = np.flatnonzero(pos)
    above = np.flatnonzero(cdf.probs[idx] > level)
    k = max(above[0] if above.size else idx.size, min_points)
    sel = np.zeros_like(pos)
    sel[idx[:k]] = True
    return sel


def slope_at_zero(cdf, r_max=None, method="polynomial", n_bootstrap=DEFAULT_BOOTSTRAP, seed=0,
                  lattice_correction=True, confidence=0.95, degree=2, level=0.5, min_points=4):
    """Slope of the CDF at zero.

    The fit uses the radii in (0, r_max]; without ``r_max`` it uses the
    leading radii whose CDF is at most ``level`` (at least ``min_points`` of
    them), so the window follows the scale of the range itself.
    ``polynomial``: weighted least squares of ``a r + b r^2 (+ c r^3 ...)``
    up to ``degree``, weights from the binomial variance at each radius.
    ``spline``: natural cubic smoothing spline through (0, 0) and the CDF,
    smoothing chosen by generalized cross-validation, derivative at 0.
    Lattice correction applies when the CDF carries its grid spacing.
    The interval comes from the bootstrap curves stored on ``cdf``.
    """
    if method not in ("polynomial", "spline"):
        raise DomainError(f"unknown slope method {method!r}")
    if degree < 1 or not 0 < level < 1:
        raise DomainError("degree must be >= 1 and level in (0, 1)")
    spacing = cdf.spacing
    sel = _fit_window(cdf, r_max, level, max(min_points, degree + 1))
    need = degree + 1 if method == "polynomial" else 3
    if np.count_nonzero(sel & (cdf.probs > 0)) < need:
        raise EstimationError(
            f"need at least {need} fit radii with positive CDF, "
            f"found {np.count_nonzero(sel & (cdf.probs > 0))}")
    r = cdf.radii[sel]
    p = cdf.probs[sel]
    boot = cdf.boot[:, sel] if cdf.boot is not None and n_bootstrap else None
    if boot is not None and boot.shape[0] > n_bootstrap:
        boot = boot[:n_bootstrap]
    if lattice_correction and spacing is not None:
        x = np.array([effective_radius(v, spacing) for v in r])
    else:
        x = r
    n_rep = cdf.per_replicate.size if cdf.per_replicate is not None else 0

    if method == "polynomial":
        m = max(n_rep, 1)
        var = np.maximum(p * (1 - p), 1.0 / m) / m
        w = 1.0 / var
        A = _design(x, degree)
        coef_map = np.linalg.pinv(A * np.sqrt(w)[:, None]) * np.sqrt(w)[None, :]
        value = float(coef_map[0] @ p)
        slopes = boot @ coef_map[0] if boot is not None else None
    else:
        value = _spline_slope(x, p)
        slopes = np.array([_spline_slope(x, b) for b in boot]) if boot is not None else None

    if slopes is not None and slopes.size:
        lo, hi = _percentile_band(slopes[:, None], confidence)
        lo, hi = _bracket(value, float(lo[0]), float(hi[0]))
    else:
        lo = hi = value
    return SlopeEstimate(value, lo, hi, method, n_rep)


def _spline_slope(x, p):
    keep = np.concatenate(([True], np.diff(x) > 0))
    x, p = x[keep], p[keep]
    xs = np.concatenate(([0.0], x))
    ps = np.concatenate(([0.0], p))
    spl = make_smoothing_spline(xs, ps)
    return float(spl.derivative()(0.0))


# --------------------------------------------------------------------------
# curvature densities

def estimate_c_d(masks):
    """Pooled exceedance fraction."""
    masks = np.asarray(masks, dtype=bool)
    if masks.size == 0:
        raise EstimationError("no masks")
    return float(masks.mean())


def _crossing_fractions(masks, lag):
    """Per-replicate crossing fraction at ``lag`` pixels, averaged over axes.

    Differing pairs are counted once per orientation of the pair, so a
    differing pair contributes 1/2 to the ordered (exceed, not exceed) rate.
    """
    h = masks[:, :, lag:] != masks[:, :, :-lag]
    v = masks[:, lag:, :] != masks[:, :-lag, :]
    return 0.25 * (h.mean(axis=(1, 2)) + v.mean(axis=(1, 2)))


def estimate_c_dm1(masks, spacing, lag=1):
    """Half-perimeter density from lag-``lag`` crossings, ``beta_2 P / (2 q h)``."""
    masks = np.asarray(masks, dtype=bool)
    if masks.ndim == 2:
        masks = masks[None]
    if lag < 1:
        raise DomainError("lag must be at least one pixel")
    frac = float(_crossing_fractions(masks, lag).mean())
    return beta_d(2) * frac / (2.0 * lag * spacing)


def lkc_densities(masks, spacing, lag=1):
    """Both densities with standard errors from replicate-to-replicate spread."""
    masks = np.asarray(masks, dtype=bool)
    if masks.ndim == 2:
        masks = masks[None]
    m = masks.shape[0]
    cd = masks.mean(axis=(1, 2))
    cdm1 = beta_d(2) * _crossing_fractions(masks, lag) / (2.0 * lag * spacing)
    se = (lambda a: float(a.std(ddof=1) / math.sqrt(m))) if m > 1 else (lambda a: float("nan"))
    return LkcDensities(float(cdm1.mean()), float(cd.mean()), se(cdm1), se(cd))


# --------------------------------------------------------------------------
# conditional exceedance curve

@lru_cache(maxsize=512)
def _disc_moments_px(rho2):
    k = int(math.isqrt(int(math.floor(rho2 + _EPS)))) + 1
    a = np.arange(-k, k + 1)
    i, j = np.meshgrid(a, a)
    d = np.sqrt(i * i + j * j)
    d = d[d * d <= rho2 + _EPS]
    return tuple(float(np.mean(d ** q)) for q in (1, 2, 3))


def chi_curve(masks, spec, radii=None, n_bootstrap=DEFAULT_BOOTSTRAP, seed=0,
              lattice_correction=True, confidence=0.95):
    """Disc-average exceedance curve and the conditional exceedance function.

    ``masks`` are excursion masks (m, n, n) of fields that exceed the
    threshold at the origin. The disc averages are fitted with a cubic whose
    value at zero is pinned to one; ``f = phi + (r/2) phi'`` and the slope of
    ``f`` at zero is 3/2 times that of ``phi``.
    """
    masks = np.asarray(masks, dtype=bool)
    if masks.ndim == 2:
        masks = masks[None]
    if masks.shape[0] == 0:
        raise EstimationError("no conditioned fields")
    c = spec.center_index
    if not masks[:, c, c].all():
        raise DomainError("every mask must contain the origin")
    if radii is None:
        radii = lattice_radii(spec.spacing, 10 * spec.spacing)
    radii = np.asarray(radii, dtype=float)
    per_field = disc_fractions(masks, spec, radii)
    phi = per_field.mean(axis=0)

    if lattice_correction:
        # phi(r) - 1 = sum_k a_k m_k(r), with m_k the lattice disc moments
        mom = np.array([_disc_moments_px(round((r / spec.spacing) ** 2, 9)) for r in radii])
        A = mom * spec.spacing ** np.arange(1, 4)
        coef_map = np.linalg.pinv(A)

        def curves(ph):
            a = coef_map @ (ph - 1.0)
            f = 1.0 + _design(radii) @ a
            return a[0], f
    else:
        A = _design(radii)
        coef_map = np.linalg.pinv(A)

        def curves(ph):
            b, cc, d = coef_map @ (ph - 1.0)
            f = 1.0 + 1.5 * b * radii + 2.0 * cc * radii ** 2 + 2.5 * d * radii ** 3
            return 1.5 * b, f

    fp0, f = curves(phi)
    f_lo = f_hi = phi_lo = phi_hi = None
    lo = hi = fp0
    if n_bootstrap:
        m = masks.shape[0]
        idx = _rng(seed, 3).integers(0, m, size=(n_bootstrap, m))
        boot_phi = per_field[idx].mean(axis=1)
        fps, fs = zip(*(curves(b) for b in boot_phi))
        fps, fs = np.array(fps), np.array(fs)
        phi_lo, phi_hi = _percentile_band(boot_phi, confidence)
        f_lo, f_hi = _percentile_band(fs, confidence)
        lo, hi = _percentile_band(fps[:, None], confidence)
        lo, hi = _bracket(fp0, float(lo[0]), float(hi[0]))
    est = SlopeEstimate(float(fp0), lo, hi, "polynomial", masks.shape[0])
    return ChiCurve(radii, phi, f, est, phi_lo, phi_hi, f_lo, f_hi)


def prop3_check(cdf, chi):
    """Check ``P(R <= r) + f(r) >= 1`` at each radius, up to bootstrap half-widths.

    Returns a list of per-radius dicts with keys r, cdf, f, slack, ok.
    """
    radii = chi.radii
    if cdf.radii.shape == radii.shape and np.allclose(cdf.radii, radii):
        probs, plo, phi_ = cdf.probs, cdf.ci_low, cdf.ci_high
    else:
        probs = cdf.at(radii)
        band = None
        if cdf.per_replicate is not None and cdf.boot is not None:
            band = cdf_direct(cdf.per_replicate, radii, cdf.boot.shape[0], 0, cdf.spacing)
        plo = band.ci_low if band else None
        phi_ = band.ci_high if band else None
    half_cdf = 0.5 * (phi_ - plo) if plo is not None else np.zeros_like(radii)
    half_f = 0.5 * (chi.f_ci_high - chi.f_ci_low) if chi.f_ci_low is not None else np.zeros_like(radii)
    report = []
    for k, r in enumerate(radii):
        slack = probs[k] + chi.f[k] - 1.0
        eps = half_cdf[k] + half_f[k]
        report.append({"r": float(r), "cdf": float(probs[k]), "f": float(chi.f[k]),
                       "slack": float(slack), "tolerance": float(eps),
                       "ok": bool(slack >= -eps - 1e-12)})
    return report


# --------------------------------------------------------------------------
# estimator front ends

class ExtremalRangeEstimator(BaseEstimator):
    """Extremal-range CDF and its slope at zero from conditioned fields.

    ``fit`` takes fields (m, n, n) that exceed ``threshold`` at the centre
    pixel; ``predict`` evaluates the fitted CDF at radii.
    """

    def __init__(self, threshold=0.0, spacing=1.0 / 60.0, radii=None, r_max=None,
                 slope_method="polynomial", lattice_correction=True,
                 n_bootstrap=DEFAULT_BOOTSTRAP, random_state=0):
        self.threshold = threshold
        self.spacing = spacing
        self.radii = radii
        self.r_max = r_max
        self.slope_method = slope_method
        self.lattice_correction = lattice_correction
        self.n_bootstrap = n_bootstrap
        self.random_state = random_state

    def fit(self, X, y=None):
        X = _fields_array(X)
        radii = self.radii
        if radii is None:
            radii = lattice_radii(self.spacing, 15 * self.spacing)
        self.samples_ = extremal_range_samples(X, self.threshold, self.spacing)
        self.cdf_ = cdf_direct(self.samples_, radii, self.n_bootstrap, self.random_state,
                               self.spacing)
        self.slope_ = slope_at_zero(self.cdf_, self.r_max, self.slope_method, self.n_bootstrap,
                                    self.random_state, self.lattice_correction)
        return self

    def predict(self, X):
        check_is_fitted(self, "cdf_")
        return self.cdf_.at(np.asarray(X, dtype=float).ravel())


class LkcDensityEstimator(BaseEstimator):
    """Volume and half-perimeter densities from unconditioned fields."""

    def __init__(self, threshold=0.0, spacing=1.0 / 60.0, lag=1):
        self.threshold = threshold
        self.spacing = spacing
        self.lag = lag

    def fit(self, X, y=None):
        masks = _fields_array(X) > self.threshold
        self.densities_ = lkc_densities(masks, self.spacing, self.lag)
        self.c_d_ = self.densities_.c_d
        self.c_dm1_ = self.densities_.c_dm1
        self.ratio_ = self.densities_.ratio
        return self


class ChiCurveEstimator(BaseEstimator):
    """Conditional exceedance curve from fields conditioned at the origin."""

    def __init__(self, threshold=0.0, spacing=1.0 / 60.0, radii=None, lattice_correction=True,
                 n_bootstrap=DEFAULT_BOOTSTRAP, random_state=0):
        self.threshold = threshold
        self.spacing = spacing
        self.radii = radii
        self.lattice_correction = lattice_correction
        self.n_bootstrap = n_bootstrap
        self.random_state = random_state

    def fit(self, X, y=None):
        X = _fields_array(X)
        spec = GridSpec(X.shape[1], self.spacing)
        self.curve_ = chi_curve(X > self.threshold, spec, self.radii, self.n_bootstrap,
                                self.random_state, self.lattice_correction)
        self.f_prime_at_0_ = self.curve_.f_prime_at_0
        return self

    def predict(self, X):
        check_is_fitted(self, "curve_")
        return np.interp(np.asarray(X, dtype=float), self.curve_.radii, self.curve_.f)
