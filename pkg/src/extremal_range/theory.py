"""Reference values for the slope of the extremal-range CDF at zero.

Gaussian fields use the kinematic-formula ratio of curvature densities,
evaluated through the scaled complementary error function so that the
exponential-over-tail factor stays finite far into the tail:
``exp(-u^2/2) / (1 - Phi(u)) = 2 / erfcx(u / sqrt(2))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from . import numerics
from .exceptions import DomainError, NumericalError


@dataclass
class TheoryCurve:
    abscissae: np.ndarray
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise NumericalError(f"non-finite values in {self.kind} curve")


def _gamma_ratio(d):
    if int(d) != d or d < 1:
        raise DomainError("dimension must be a positive integer")
    return math.exp(math.lgamma((d + 1) / 2.0) - math.lgamma(d / 2.0))


def beta_d(d):
    return 2.0 * math.sqrt(math.pi) * _gamma_ratio(d)


def gaussian_slope(u, lam, d=2):
    """Twice the half-perimeter density over the volume density, Gaussian field."""
    if not lam > 0:
        raise DomainError("spectral moment must be positive")
    u = np.asarray(u, dtype=float)
    out = math.sqrt(lam / math.pi) * 2.0 / special.erfcx(u / math.sqrt(2.0)) * _gamma_ratio(d)
    return float(out) if out.ndim == 0 else out


def gaussian_limit_constant(lam, d=2):
    """Limit of ``gaussian_slope(u) / u`` as ``u`` grows."""
    if not lam > 0:
        raise DomainError("spectral moment must be positive")
    return math.sqrt(2.0 * lam) * _gamma_ratio(d)


def _gaussian_c_dm1(v, lam, d):
    # half-perimeter density of {G > v}; equals c_d * slope / 2
    return 0.5 * math.sqrt(lam / math.pi) * np.exp(-np.square(v) / 2.0) * _gamma_ratio(d)


def lkc_densities_gaussian(u, lam, d=2):
    from .estimators import LkcDensities

    c_d = float(numerics.std_normal_sf(u))
    return LkcDensities(c_d * gaussian_slope(u, lam, d) / 2.0, c_d)


def lkc_densities_mixture(u, lam, alpha, d=2):
    """Densities of ``Lambda G``: the Gaussian densities at ``u / Lambda``, averaged over Lambda."""
    from .estimators import LkcDensities

    if not alpha > 0:
        raise DomainError("alpha must be positive")
    c_d = numerics.mixture_marginal_sf(u, alpha)
    val, err = integrate.quad(
        lambda t: _gaussian_c_dm1(u * t, lam, d) * alpha * t ** (alpha - 1.0), 0.0, 1.0,
        epsabs=1e-12, epsrel=1e-10, limit=200)
    if err > 1e-8 * max(1.0, abs(val)):
        raise NumericalError("mixture curvature quadrature did not converge")
    return LkcDensities(val, c_d)


def mixture_slope(u, lam, alpha, d=2):
    return lkc_densities_mixture(u, lam, alpha, d).ratio


def practical_cdf_approx(r, lam, d=2):
    """First-order approximation of ``P(u R <= r)`` for a Gaussian field at high ``u``."""
    return min(1.0, gaussian_limit_constant(lam, d) * r)


def scaling_rate(model_tag, p):
    """Rate ``g(p)`` that stabilizes the rescaled range; ``None`` when not available."""
    if not 0 < p < 1:
        raise DomainError("p must lie in (0, 1)")
    if model_tag == "gaussian":
        return math.sqrt(-math.log1p(-p))
    if model_tag == "mixture":
        return 1.0
    return None


def mc_lkc_oracle(model, u, n_reps, spec, seed, factor=None, lag=1):
    """Monte Carlo curvature densities from unconditioned fields.

    Used as the reference for models without a closed form here. Standard
    errors come from the spread over replicates.
    """
    from .estimators import lkc_densities
    from .randfield import factorize_grid, sample_fields

    if n_reps < 100:
        raise DomainError("the oracle needs at least 100 replicates")
    if factor is None:
        factor = factorize_grid(spec, model.matern)
    masks = np.concatenate([
        sample_fields(model, factor, seed, range(s, min(s + 256, n_reps))) > u
        for s in range(0, n_reps, 256)])
    return lkc_densities(masks, spec.spacing, lag)


def gaussian_slope_curve(us, lam, d=2):
    us = np.asarray(us, dtype=float)
    return TheoryCurve(us, gaussian_slope(us, lam, d), "slope")
