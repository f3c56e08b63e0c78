import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from extremal_range.exceptions import DomainError
from extremal_range.geometry import (DistanceTransformer, ExcursionMask, ExcursionSetTransformer,
                                     dilate, disc_fraction, distance_transform, erode,
                                     excursion_mask, lattice_radii, squared_edt)
from extremal_range.randfield import GridField, GridSpec

H = 1 / 60


def brute_d2(mask, ring=True):
    """Squared pixel distance to the nearest False pixel (and window ring)."""
    n = mask.shape[0]
    rng = range(-1, n + 1) if ring else range(n)
    bg = [(i, j) for i in rng for j in rng
          if not (0 <= i < n and 0 <= j < n) or not mask[i, j]]
    out = np.full(mask.shape, np.inf)
    if not bg:
        return out
    bg = np.array(bg)
    for i, j in itertools.product(range(n), repeat=2):
        out[i, j] = ((bg - (i, j)) ** 2).sum(axis=1).min()
    return out


def brute_erode(mask, rpx):
    """Structuring-element erosion with a disc of radius ``rpx`` pixels; outside is background."""
    n = mask.shape[0]
    k = int(rpx)
    offs = [(a, b) for a in range(-k, k + 1) for b in range(-k, k + 1) if a * a + b * b <= rpx * rpx]
    pad = np.pad(mask, k, constant_values=False)
    out = np.ones_like(mask)
    for a, b in offs:
        out &= pad[k + a:k + a + n, k + b:k + b + n]
    return out


def as_mask(bits):
    return ExcursionMask(GridSpec(bits.shape[0], H), bits)


masks_16 = arrays(bool, (15, 15), elements=st.booleans())


class TestDistanceTransform:
    def test_all_false(self):
        d = distance_transform(as_mask(np.zeros((9, 9), bool)))
        np.testing.assert_array_equal(d.dist, 0.0)

    def test_all_true_ignore(self):
        d = distance_transform(as_mask(np.ones((9, 9), bool)), outside="ignore")
        assert np.all(np.isinf(d.dist))

    def test_single_hole(self):
        bits = np.ones((31, 31), bool)
        bits[15, 15] = False
        d = distance_transform(as_mask(bits), outside="ignore").dist
        ii, jj = np.mgrid[:31, :31]
        np.testing.assert_allclose(d, np.hypot(ii - 15, jj - 15) * H, rtol=1e-15)

    def test_random_masks_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            bits = rng.random((32, 32)) < rng.uniform(0.2, 0.99)
            assert np.array_equal(squared_edt(~bits), brute_d2(bits))

    def test_without_ring(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            bits = rng.random((12, 12)) < 0.9
            assert np.array_equal(squared_edt(~bits, pad_seeds=False), brute_d2(bits, ring=False))

    def test_batch_matches_single(self):
        rng = np.random.default_rng(2)
        bits = rng.random((4, 10, 10)) < 0.7
        batch = squared_edt(bits)
        for k in range(4):
            np.testing.assert_array_equal(batch[k], squared_edt(bits[k]))

    @settings(max_examples=40, deadline=None)
    @given(masks_16)
    def test_lipschitz(self, bits):
        d = distance_transform(as_mask(bits)).dist / H
        assert np.all(np.abs(np.diff(d, axis=0)) <= 1 + 1e-12)
        assert np.all(np.abs(np.diff(d, axis=1)) <= 1 + 1e-12)
        assert np.all(d[~bits] == 0)


class TestMorphology:
    @settings(max_examples=40, deadline=None)
    @given(masks_16, st.sampled_from([0.0, 1.0, 1.5, 2.0, 2.9, 4.0]))
    def test_erosion_matches_structuring_element(self, bits, rpx):
        np.testing.assert_array_equal(erode(as_mask(bits), rpx * H).bits, brute_erode(bits, rpx))

    @settings(max_examples=40, deadline=None)
    @given(masks_16, st.floats(0, 6), st.floats(0, 6))
    def test_anti_extensive_and_monotone(self, bits, a, b):
        m = as_mask(bits)
        lo, hi = sorted((a, b))
        e_lo, e_hi = erode(m, lo * H).bits, erode(m, hi * H).bits
        assert not np.any(e_lo & ~bits)
        assert not np.any(e_hi & ~e_lo)

    @settings(max_examples=40, deadline=None)
    @given(masks_16, st.floats(0, 6))
    def test_duality(self, bits, r):
        m = as_mask(bits)
        comp = as_mask(~bits)
        np.testing.assert_array_equal(dilate(comp, r * H, outside=True).bits,
                                      ~erode(m, r * H).bits)

    def test_identity_at_zero(self):
        bits = np.random.default_rng(3).random((21, 21)) < 0.6
        np.testing.assert_array_equal(erode(as_mask(bits), 0.0).bits, bits)

    def test_composition_on_convex_mask(self):
        ii, jj = np.mgrid[:41, :41]
        bits = (np.abs(ii - 20) <= 15) & (np.abs(jj - 20) <= 12)
        m = as_mask(bits)
        twice = erode(erode(m, 2 * H), 3 * H).bits
        once = erode(m, 5 * H).bits
        np.testing.assert_array_equal(twice, once)

    def test_composition_contains(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            m = as_mask(rng.random((17, 17)) < 0.85)
            twice = erode(erode(m, 1.5 * H), 2.2 * H).bits
            assert not np.any(erode(m, 3.7 * H).bits & ~twice)

    def test_full_mask_interior_survives(self):
        m = as_mask(np.ones((61, 61), bool))
        e = erode(m, 20 * H).bits
        # distance to the outside ring is min(i + 1, n - i) pixels along each axis
        assert e[30, 30] and e[20, 30] and not e[19, 30] and not e[0, 0]
        assert e.sum() == 21 * 21

    def test_negative_radius(self):
        with pytest.raises(DomainError):
            erode(as_mask(np.ones((5, 5), bool)), -0.1)


class TestDiscFraction:
    def test_constant_masks(self):
        assert disc_fraction(as_mask(np.ones((31, 31), bool)), 10 * H) == 1.0
        assert disc_fraction(as_mask(np.zeros((31, 31), bool)), 10 * H) == 0.0

    def test_half_plane(self):
        _, jj = np.mgrid[:61, :61]
        frac = disc_fraction(as_mask(jj > 30), 10 * H)
        # the centre column holds 21 of the 317 disc pixels
        assert abs(frac - 0.5) <= 21 / 317

    def test_outside_window(self):
        with pytest.raises(DomainError):
            disc_fraction(as_mask(np.ones((11, 11), bool)), 6 * H)


def test_excursion_mask_strict():
    spec = GridSpec(5, H)
    vals = np.arange(25.0).reshape(5, 5)
    f = GridField(spec, vals)
    assert excursion_mask(f, -np.inf).bits.all()
    assert not excursion_mask(f, vals.max()).bits.any()
    assert excursion_mask(f, 12.0).bits.sum() == 12


def test_lattice_radii():
    r = lattice_radii(1.0, 3.0)
    np.testing.assert_allclose(r ** 2, [1, 2, 4, 5, 8, 9])


def test_transformers():
    x = np.random.default_rng(0).standard_normal((3, 9, 9))
    masks = ExcursionSetTransformer(threshold=0.5).fit_transform(x)
    np.testing.assert_array_equal(masks, x > 0.5)
    d = DistanceTransformer(spacing=H).fit_transform(masks)
    assert d.shape == (3, 9, 9) and np.all(d[~masks] == 0)
    assert ExcursionSetTransformer().get_params() == {"threshold": 0.0}
