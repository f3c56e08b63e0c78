"""Special functions, marginal laws and quadrature used across the package.

Normal-law functions delegate to :mod:`scipy.special` (Cephes ``ndtr`` /
``ndtri``, accurate to a few ulp). The Student and chi-square laws with three
degrees of freedom have elementary closed forms which are written out here;
their inverses use bracketed Brent root finding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from .exceptions import DomainError, NumericalError, UnsupportedSmoothnessError

SUPPORTED_NU = (1.5, 2.5, 3.5)

_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class MaternParams:
    """Matern correlation parameters: smoothness ``nu`` and length scale ``ell``."""

    nu: float = 2.5
    ell: float = 0.1

    def __post_init__(self):
        if not self.nu > 0:
            raise DomainError(f"nu must be positive, got {self.nu}")
        if not self.ell > 0:
            raise DomainError(f"ell must be positive, got {self.ell}")


@dataclass(frozen=True)
class QuadratureRule:
    """Fixed nodes and positive weights on ``domain = (a, b)``."""

    nodes: np.ndarray
    weights: np.ndarray
    domain: tuple

    def __post_init__(self):
        if np.any(self.weights <= 0):
            raise DomainError("quadrature weights must be positive")
        if np.any(np.diff(self.nodes) <= 0):
            raise DomainError("quadrature nodes must be strictly increasing")

    def integrate(self, func):
        return float(np.dot(self.weights, func(self.nodes)))


def gauss_legendre(n, a, b):
    """Gauss-Legendre rule with ``n`` nodes on ``[a, b]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return QuadratureRule(nodes=half * x + 0.5 * (a + b), weights=half * w, domain=(a, b))


# --------------------------------------------------------------------------
# Matern correlation

def matern_correlation(h, params):
    """Matern correlation at lag ``h`` for half-integer smoothness.

    Uses the polynomial-times-exponential closed forms, which coincide with
    the Bessel expression for ``nu`` in {1.5, 2.5, 3.5}.
    """
    h = np.asarray(h, dtype=float)
    if np.any(h < 0):
        raise DomainError("lag must be nonnegative")
    x = math.sqrt(2.0 * params.nu) * h / params.ell
    if params.nu == 1.5:
        poly = 1.0 + x
    elif params.nu == 2.5:
        poly = 1.0 + x + x * x / 3.0
    elif params.nu == 3.5:
        poly = 1.0 + x + 0.4 * x * x + x ** 3 / 15.0
    else:
        raise UnsupportedSmoothnessError(
            f"unsupported smoothness nu={params.nu}; supported: {SUPPORTED_NU}")
    out = poly * np.exp(-x)
    return float(out) if out.ndim == 0 else out


def second_spectral_moment(params):
    """Curvature of the correlation at zero lag, ``nu / (ell**2 (nu - 1))``."""
    if params.nu <= 1:
        raise DomainError(f"infinite spectral moment for nu={params.nu} <= 1")
    return params.nu / (params.ell ** 2 * (params.nu - 1.0))


# --------------------------------------------------------------------------
# standard normal

def std_normal_cdf(x):
    return special.ndtr(x)


def std_normal_sf(x):
    return special.ndtr(-np.asarray(x, dtype=float))


def _check_prob(p):
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise DomainError("probability must lie in the open interval (0, 1)")
    return p


def std_normal_quantile(p):
    return special.ndtri(_check_prob(p))


def std_normal_isf(q):
    """Inverse survival function; accurate for tiny tail probabilities."""
    return -special.ndtri(_check_prob(q))


# --------------------------------------------------------------------------
# inversion helper

def _invert(cdf, sf, p, lo, hi):
    """Solve ``cdf(x) = p`` using the survival side above the median."""
    if p <= 0.5:
        g = lambda x: cdf(x) - p
    else:
        q = 1.0 - p
        g = lambda x: q - sf(x)
    # expand the bracket geometrically
    for _ in range(200):
        if g(lo) < 0:
            break
        lo = lo - 2.0 * (abs(lo) + 1.0)
    else:
        raise NumericalError("could not bracket quantile")
    for _ in range(200):
        if g(hi) > 0:
            break
        hi = hi + 2.0 * (abs(hi) + 1.0)
    else:
        raise NumericalError("could not bracket quantile")
    return optimize.brentq(g, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)


def _vectorize_quantile(fn, p):
    p = _check_prob(p)
    if p.ndim == 0:
        return fn(float(p))
    return np.array([fn(float(v)) for v in p.ravel()]).reshape(p.shape)


# --------------------------------------------------------------------------
# Student t, 3 degrees of freedom

def student_cdf_k3(t):
    t = np.asarray(t, dtype=float)
    y = t / _SQRT3
    out = 0.5 + (y / (1.0 + y * y) + np.arctan(y)) / math.pi
    return float(out) if out.ndim == 0 else out


def student_sf_k3(t):
    return student_cdf_k3(-np.asarray(t, dtype=float))


def student_quantile_k3(p):
    return _vectorize_quantile(
        lambda v: _invert(student_cdf_k3, student_sf_k3, v, -1.0, 1.0), p)


# --------------------------------------------------------------------------
# chi-square, 3 degrees of freedom: P(3/2, x/2) in elementary form

def chisq_cdf_k3(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("chi-square argument must be nonnegative")
    out = special.erf(np.sqrt(x / 2.0)) - np.sqrt(2.0 * x / math.pi) * np.exp(-x / 2.0)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def chisq_sf_k3(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("chi-square argument must be nonnegative")
    out = special.erfc(np.sqrt(x / 2.0)) + np.sqrt(2.0 * x / math.pi) * np.exp(-x / 2.0)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def chisq_quantile_k3(p):
    def one(v):
        cdf = lambda x: chisq_cdf_k3(max(x, 0.0))
        sf = lambda x: chisq_sf_k3(max(x, 0.0))
        g = (lambda x: cdf(x) - v) if v <= 0.5 else (lambda x: (1.0 - v) - sf(x))
        hi = 4.0
        while g(hi) <= 0:
            hi *= 2.0
        return optimize.brentq(g, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    return _vectorize_quantile(one, p)


def chisq_isf_k3(q):
    """Value exceeded with probability ``q``; keeps precision for tiny ``q``."""
    def one(v):
        g = lambda x: v - chisq_sf_k3(max(x, 0.0))
        hi = 4.0
        while g(hi) <= 0:
            hi *= 2.0
        return optimize.brentq(g, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    return _vectorize_quantile(one, q)


# --------------------------------------------------------------------------
# Gaussian scale mixture W = Lambda * G with Pareto(alpha) Lambda on [1, inf)
#
# With t = 1/lambda the mixing density alpha * lambda**(-alpha-1) d lambda
# becomes alpha * t**(alpha-1) dt on (0, 1].

def _mixture_integral(integrand, alpha):
    val, err, info = integrate.quad(
        lambda t: integrand(t) * alpha * t ** (alpha - 1.0), 0.0, 1.0,
        epsabs=1e-10, epsrel=1e-10, limit=200, full_output=True)[:3]
    if err > 1e-8:
        raise NumericalError(f"mixture quadrature did not converge (error estimate {err:.2e})")
    return val


def mixture_marginal_cdf(w, alpha):
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    w = float(w)
    if w > 0:
        return 1.0 - mixture_marginal_sf(w, alpha)
    return _mixture_integral(lambda t: special.ndtr(w * t), alpha)


def mixture_marginal_sf(w, alpha):
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    w = float(w)
    if w < 0:
        return 1.0 - mixture_marginal_cdf(w, alpha)
    return _mixture_integral(lambda t: special.ndtr(-w * t), alpha)


def mixture_marginal_quantile(p, alpha):
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    return _vectorize_quantile(
        lambda v: _invert(lambda w: mixture_marginal_cdf(w, alpha),
                          lambda w: mixture_marginal_sf(w, alpha), v, -1.0, 1.0), p)
