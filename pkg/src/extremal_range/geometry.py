"""Excursion-set geometry on the pixel grid.

Distances are measured between pixel centres. Pixels outside the observation
window count as non-exceedance: the exact transform runs on the mask padded
with a one-pixel ring of background, which is where the nearest outside pixel
always lies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import DomainError
from .randfield import GridField, GridSpec

# squared-radius comparisons treat |d - r| < 1e-9 pixels as equality
_EPS = 1e-9


@dataclass
class ExcursionMask:
    spec: GridSpec
    bits: np.ndarray
    threshold: float = np.nan

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool).reshape(self.spec.n_side, self.spec.n_side)


@dataclass
class DistanceMap:
    """Distance (domain units) from each pixel centre to the nearest non-exceedance."""

    spec: GridSpec
    dist: np.ndarray


# --------------------------------------------------------------------------
# exact squared Euclidean distance transform (lower envelope of parabolas)

@njit(cache=True, nogil=True)
def _dt1d(f, out, v, z):
    n = f.shape[0]
    inf = np.inf
    k = -1
    for q in range(n):
        if f[q] == inf:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -inf
            z[1] = inf
            continue
        s = 0.0
        while k >= 0:
            p = v[k]
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * (q - p))
            if s <= z[k]:
                k -= 1
            else:
                break
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -inf
            z[1] = inf
        else:
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = inf
    if k < 0:
        for q in range(n):
            out[q] = inf
        return
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        p = v[k]
        out[q] = (q - p) * (q - p) + f[p]


@njit(cache=True, nogil=True)
def _edt_batch(seeds):
    m, nr, nc = seeds.shape
    n = max(nr, nc)
    out = np.empty((m, nr, nc))
    col = np.empty(n)
    res = np.empty(n)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1)
    for b in range(m):
        for j in range(nc):
            for i in range(nr):
                col[i] = 0.0 if seeds[b, i, j] else np.inf
            _dt1d(col[:nr], res[:nr], v, z)
            for i in range(nr):
                out[b, i, j] = res[i]
        for i in range(nr):
            for j in range(nc):
                col[j] = out[b, i, j]
            _dt1d(col[:nc], res[:nc], v, z)
            for j in range(nc):
                out[b, i, j] = res[j]
    return out


def squared_edt(seeds, pad_seeds=True):
    """Squared pixel distance to the nearest seed pixel.

    ``seeds`` is a boolean array of shape (n, n) or (m, n, n). With
    ``pad_seeds`` the ring just outside the window also counts as seed.
    Pixels with no seed anywhere get ``inf``. Values are exact integers.
    """
    seeds = np.asarray(seeds, dtype=bool)
    single = seeds.ndim == 2
    if single:
        seeds = seeds[None]
    if pad_seeds:
        seeds = np.pad(seeds, ((0, 0), (1, 1), (1, 1)), constant_values=True)
        out = _edt_batch(seeds)[:, 1:-1, 1:-1]
    else:
        out = _edt_batch(np.ascontiguousarray(seeds))
    return out[0] if single else out


# --------------------------------------------------------------------------
# operations on masks

def excursion_mask(field, u):
    """Pixels strictly above ``u``."""
    return ExcursionMask(field.spec, field.values > u, float(u))


def distance_transform(mask, outside="background"):
    """Exact Euclidean distance map of ``mask`` in domain units.

    ``outside="background"`` applies the window convention; ``"ignore"``
    leaves pixels beyond the window out, so an all-true mask maps to ``inf``.
    """
    if outside not in ("background", "ignore"):
        raise DomainError("outside must be 'background' or 'ignore'")
    d2 = squared_edt(~mask.bits, pad_seeds=outside == "background")
    return DistanceMap(mask.spec, np.sqrt(d2) * mask.spec.spacing)


def _radius_sq(r, spacing):
    if r < 0:
        raise DomainError("radius must be nonnegative")
    return (r / spacing) ** 2


def erode_bits(bits, r, spacing):
    """Erosion of boolean masks (n, n) or (m, n, n) by radius ``r``."""
    return squared_edt(~np.asarray(bits, bool), pad_seeds=True) > _radius_sq(r, spacing) + _EPS


def erode(mask, r):
    """Pixels whose distance to the non-exceedance set exceeds ``r``."""
    return ExcursionMask(mask.spec, erode_bits(mask.bits, r, mask.spec.spacing), mask.threshold)


def dilate(mask, r, outside=False):
    """Pixels within ``r`` of the mask; ``outside=True`` counts the exterior as inside."""
    d2 = squared_edt(mask.bits, pad_seeds=outside)
    return ExcursionMask(mask.spec, d2 <= _radius_sq(r, mask.spec.spacing) + _EPS, mask.threshold)


def disc_pixels(spec, r):
    """Boolean selector of pixel centres within ``r`` of the origin."""
    if r > spec.inradius + _EPS * spec.spacing:
        raise DomainError(f"radius {r} exceeds the window inradius {spec.inradius}")
    ii, jj = spec.offsets()
    return ii * ii + jj * jj <= _radius_sq(r, spec.spacing) + _EPS


def disc_fraction(mask, r):
    """Share of pixels within ``r`` of the origin that are in the mask."""
    sel = disc_pixels(mask.spec, r)
    return float(mask.bits[sel].mean())


def disc_fractions(bits, spec, radii):
    """Disc fractions for a batch of masks; returns shape (m, len(radii))."""
    bits = np.asarray(bits, dtype=bool)
    out = np.empty((bits.shape[0], len(radii)))
    for k, r in enumerate(radii):
        sel = disc_pixels(spec, r)
        out[:, k] = bits[:, sel].mean(axis=1)
    return out


def lattice_radii(spacing, r_max, r_min=0.0):
    """Distinct centre-to-centre distances of the lattice in (r_min, r_max]."""
    k = int(np.floor(r_max / spacing + _EPS))
    a = np.arange(0, k + 1)
    d2 = np.unique((a[:, None] ** 2 + a[None, :] ** 2).ravel())
    d = np.sqrt(d2[(d2 > 0) & (d2 <= _radius_sq(r_max, spacing) + _EPS)]) * spacing
    return d[d > r_min + _EPS * spacing]


# --------------------------------------------------------------------------
# transformer front ends

def _fields_array(X):
    if isinstance(X, GridField):
        return X.values[None]
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1] != X.shape[2]:
        raise DomainError("expected fields of shape (n_fields, n_side, n_side)")
    if not np.all(np.isfinite(X)):
        raise DomainError("fields contain non-finite values")
    return X


class ExcursionSetTransformer(TransformerMixin, BaseEstimator):
    """Maps fields (m, n, n) to boolean excursion masks at ``threshold``."""

    def __init__(self, threshold=0.0):
        self.threshold = threshold

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        return _fields_array(X) > self.threshold


class DistanceTransformer(TransformerMixin, BaseEstimator):
    """Maps boolean masks (m, n, n) to distance maps in domain units."""

    def __init__(self, spacing=1.0 / 60.0, outside="background"):
        self.spacing = spacing
        self.outside = outside

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=bool)
        if X.ndim == 2:
            X = X[None]
        if self.outside not in ("background", "ignore"):
            raise DomainError("outside must be 'background' or 'ignore'")
        return np.sqrt(squared_edt(~X, pad_seeds=self.outside == "background")) * self.spacing
