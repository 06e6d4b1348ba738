"""Grid function calculus: differences, hinges, covers, expansion."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from artifact.errors import (
    DomainTooSmallError,
    IndexOutOfRangeError,
    InvalidIntervalError,
    ShapeError,
)
from artifact.gridfn import (
    DyadicInterval,
    GridFunction,
    delta,
    delta2,
    dyadic_decompose,
    from_csv_row,
    interval_indicator,
    is_discrete_convex_lipschitz,
    random_convex_lipschitz,
    random_lipschitz,
    reconstruct_from_taylor,
    relu,
    taylor_expand,
    to_csv_row,
)


def gf(vals):
    vals = np.asarray(vals, dtype=float)
    return GridFunction(len(vals), vals)


class TestDifferences:
    def test_delta_squares(self):
        assert_array_equal(delta(gf([0, 1, 4, 9])).values, [1, 3, 5])

    def test_delta_constant(self):
        assert_array_equal(delta(gf([7.0, 7.0, 7.0])).values, [0, 0])

    def test_delta_hinge(self):
        assert_array_equal(delta(relu(2, 4)).values, [0, 0, 1])

    def test_delta2_squares(self):
        assert_array_equal(delta2(gf([0, 1, 4, 9, 16])).values, [2, 2, 2])

    def test_delta2_affine_is_zero(self):
        f = gf(3 + 2 * np.arange(6))
        assert_array_equal(delta2(f).values, np.zeros(4))

    def test_delta2_hinge(self):
        assert_array_equal(delta2(relu(2, 5)).values, [0, 1, 0])

    def test_delta2_is_iterated_delta(self):
        rng = np.random.default_rng(3)
        f = gf(rng.normal(size=17))
        assert_allclose(delta2(f).values, delta(delta(f)).values, rtol=0, atol=0)

    def test_too_small(self):
        with pytest.raises(DomainTooSmallError):
            delta(gf([1.0]))
        with pytest.raises(DomainTooSmallError):
            delta2(gf([1.0, 2.0]))


class TestAdmissibility:
    def test_vee_is_admissible(self):
        m = 8
        f = gf(np.abs(np.arange(m) - m / 2))
        assert is_discrete_convex_lipschitz(f, 0.0)

    def test_concave_bump_rejected(self):
        assert not is_discrete_convex_lipschitz(gf([0, 1, 0]), 0.0)

    def test_steep_slope_rejected(self):
        assert not is_discrete_convex_lipschitz(gf([0, 2, 4]), 0.0)

    def test_tolerance_admits_slack(self):
        f = gf([0, 1.05, 2.1])
        assert not is_discrete_convex_lipschitz(f, 0.0)
        assert is_discrete_convex_lipschitz(f, 0.11)

    def test_total_on_tiny_grids(self):
        assert is_discrete_convex_lipschitz(gf([4.0]), 0.0)
        assert is_discrete_convex_lipschitz(gf([0.0, 0.5]), 0.0)
        assert not is_discrete_convex_lipschitz(gf([0.0, 2.0]), 0.0)

    def test_curvature_mass_bounded_by_two(self):
        # admissible functions concentrate at most 2 units of curvature
        rng = np.random.default_rng(11)
        for _ in range(200):
            f = random_convex_lipschitz(24, rng)
            assert is_discrete_convex_lipschitz(f, 1e-12)
            d1 = delta(f).values
            d2 = delta2(f).values
            assert np.sum(np.abs(d2)) <= 2 + 1e-9
            assert abs(np.sum(np.abs(d2)) - (d1[-1] - d1[0])) < 1e-9
            assert abs(d1[0]) <= 1 + 1e-12


class TestPrimitives:
    def test_relu_zero_is_identity(self):
        assert_array_equal(relu(0, 4).values, [0, 1, 2, 3])

    def test_relu_interior(self):
        assert_array_equal(relu(2, 4).values, [0, 0, 0, 1])

    def test_relu_last_point_vanishes(self):
        assert_array_equal(relu(3, 4).values, [0, 0, 0, 0])

    def test_relu_range_checked(self):
        with pytest.raises(IndexOutOfRangeError):
            relu(4, 4)
        with pytest.raises(IndexOutOfRangeError):
            relu(-1, 4)

    def test_indicator_full_range(self):
        assert_array_equal(interval_indicator(0, 7, 8).values, np.ones(8))

    def test_indicator_window(self):
        assert_array_equal(interval_indicator(1, 2, 4).values, [0, 1, 1, 0])

    def test_indicator_rejects_reversed(self):
        with pytest.raises(InvalidIntervalError):
            interval_indicator(3, 1, 8)

    @pytest.mark.parametrize("m", [4, 8, 32])
    def test_consecutive_hinge_difference_is_tail_indicator(self, m):
        for a in range(m - 1):
            diff = relu(a, m).values - relu(a + 1, m).values
            assert_array_equal(diff, interval_indicator(a + 1, m - 1, m).values)


class TestTaylor:
    def test_squares(self):
        c0, c1, c2 = taylor_expand(gf([0, 1, 4, 9, 16]))
        assert (c0, c1) == (0, 1)
        assert_array_equal(c2, [2, 2, 2])

    def test_affine(self):
        c0, c1, c2 = taylor_expand(gf(3 + 2 * np.arange(5)))
        assert (c0, c1) == (3, 2)
        assert_array_equal(c2, np.zeros(3))

    def test_hinge(self):
        c0, c1, c2 = taylor_expand(relu(2, 5))
        assert (c0, c1) == (0, 0)
        assert_array_equal(c2, [0, 1, 0])

    def test_reconstruct_squares(self):
        f = reconstruct_from_taylor(0.0, 1.0, np.array([2.0, 2.0, 2.0]), 5)
        assert_array_equal(f.values, [0, 1, 4, 9, 16])

    def test_reconstruct_constant(self):
        f = reconstruct_from_taylor(2.5, 0.0, np.zeros(4), 6)
        assert_array_equal(f.values, np.full(6, 2.5))

    def test_reconstruct_matches_pointwise_hinge_sum(self):
        # independent route: evaluate c0 + c1*y + sum_i c2[i]*relu(i+1)(y)
        rng = np.random.default_rng(5)
        for _ in range(50):
            m = int(rng.integers(3, 65))
            c0, c1 = rng.normal(size=2)
            c2 = rng.normal(size=m - 2)
            direct = c0 + c1 * np.arange(m, dtype=float)
            for i in range(m - 2):
                direct = direct + c2[i] * relu(i + 1, m).values
            f = reconstruct_from_taylor(c0, c1, c2, m)
            assert_allclose(f.values, direct, atol=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            reconstruct_from_taylor(0.0, 0.0, np.zeros(3), 4)

    @given(
        st.integers(min_value=3, max_value=64),
        st.integers(min_value=0, max_value=2**31 - 1),
    )
    @settings(max_examples=200, deadline=None)
    def test_round_trip(self, m, seed):
        rng = np.random.default_rng(seed)
        f = gf(rng.uniform(-10, 10, size=m))
        back = reconstruct_from_taylor(*taylor_expand(f), m)
        assert_allclose(back.values, f.values, atol=1e-9)


class TestDyadic:
    def test_full_range_is_one_block(self):
        cover = dyadic_decompose(0, 7, 8)
        assert cover == [DyadicInterval(3, 0, 8)]

    def test_three_piece_cover(self):
        cover = dyadic_decompose(3, 6, 8)
        assert [(iv.lo, iv.hi) for iv in cover] == [(3, 3), (4, 5), (6, 6)]

    def test_four_piece_cover(self):
        cover = dyadic_decompose(1, 6, 8)
        assert [(iv.lo, iv.hi) for iv in cover] == [(1, 1), (2, 3), (4, 5), (6, 6)]
        assert len(cover) <= 2 * 3

    def test_rejects_reversed(self):
        with pytest.raises(InvalidIntervalError):
            dyadic_decompose(5, 2, 8)

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ShapeError):
            dyadic_decompose(0, 4, 6)

    @pytest.mark.parametrize("m", [2, 4, 16, 256])
    def test_exhaustive_disjoint_cover_within_budget(self, m):
        r = m.bit_length() - 1
        for a in range(m):
            for b in range(a, m):
                cover = dyadic_decompose(a, b, m)
                assert len(cover) <= 2 * r or (m == 2 and len(cover) <= 2)
                pos = a
                for iv in cover:
                    assert iv.lo == pos  # contiguous, no gaps or overlap
                    assert iv.lo % iv.length == 0
                    pos = iv.hi + 1
                assert pos == b + 1

    def test_interval_validation(self):
        with pytest.raises(InvalidIntervalError):
            DyadicInterval(1, 4, 8)
        with pytest.raises(InvalidIntervalError):
            DyadicInterval(4, 0, 8)


class TestSerialization:
    def test_round_trip(self):
        f = gf([0.25, -1.0, 3.5, 0.1])
        assert_array_equal(from_csv_row(to_csv_row(f)).values, f.values)

    def test_header_count_checked(self):
        with pytest.raises(ShapeError):
            from_csv_row("3,1.0,2.0")

    def test_garbage_rejected(self):
        with pytest.raises(ShapeError):
            from_csv_row("2,one,two")


class TestSamplers:
    def test_control_sampler_is_lipschitz_but_not_convex(self):
        rng = np.random.default_rng(0)
        hits = 0
        for _ in range(50):
            f = random_lipschitz(32, rng)
            assert np.max(np.abs(delta(f).values)) <= 1 + 1e-12
            if not is_discrete_convex_lipschitz(f, 1e-9):
                hits += 1
        assert hits >= 45  # sign-mixed curvature almost surely
