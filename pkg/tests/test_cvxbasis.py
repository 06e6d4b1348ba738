"""Basis construction and constructive approximation certificates."""

from math import log2

import numpy as np
import pytest
from numpy.testing import assert_allclose

from artifact.cvxbasis import (
    approximate_convex,
    approximate_dyadic_interval,
    approximate_interval,
    approximate_relu,
    build_cvx_basis,
    build_what,
    certify_basis,
    convex_error_sweep,
    load_basis,
    minimax_fit,
    relu_error_sweep,
    save_basis,
    spaced_hinge_basis,
)
from artifact.errors import (
    CorruptBasisError,
    IndexOutOfRangeError,
    InvalidConfigError,
    NotConvexLipschitzError,
    ShapeError,
)
from artifact.gridfn import (
    DyadicInterval,
    GridFunction,
    dyadic_decompose,
    random_convex_lipschitz,
    relu,
)


def recompute_residual(basis, cert, target_values):
    """Independent route: dense element values times coefficient map."""
    approx = np.zeros(basis.m)
    values = {name: g.values for name, g in basis.elements()}
    for name, c in cert.coefficients.items():
        approx += c * values[name]
    return float(np.max(np.abs(approx - target_values)))


class TestBuildWhat:
    def test_level_structure(self):
        basis = build_what(0.25, 64)
        assert set(basis.level_index) == set(range(7))
        for h, (start, stop) in basis.level_index.items():
            assert stop - start == basis.codes[h].k
            assert basis.codes[h].n == 64 >> h

    def test_tiny_grid_vacuous_bound(self):
        basis = build_what(1.0, 2)
        for h in (0, 1):
            for a in range(2 >> h):
                cert = approximate_dyadic_interval(basis, DyadicInterval(h, a, 2))
                assert cert.sup_error <= 1.0

    def test_all_dyadic_intervals_within_mu(self):
        basis = build_what(0.25, 64, seed=0)
        for h in range(7):
            for a in range(64 >> h):
                cert = approximate_dyadic_interval(basis, DyadicInterval(h, a, 64))
                assert cert.sup_error <= 0.25 + 1e-12

    def test_random_route_has_real_residuals(self):
        # mu = 0.7 keeps the level-0 budget under n, so signs are random
        basis = build_what(0.7, 64, seed=0)
        assert basis.codes[0].k < 64
        cert = approximate_dyadic_interval(basis, DyadicInterval(0, 3, 64))
        assert 0 < cert.sup_error <= 0.7

    def test_elements_bounded(self):
        basis = build_what(0.5, 32)
        for _, g in basis.elements():
            assert np.max(np.abs(g.values)) <= 1.0 + 1e-12

    def test_rejects_bad_arguments(self):
        with pytest.raises(ShapeError):
            build_what(0.5, 48)
        with pytest.raises(InvalidConfigError):
            build_what(0.0, 32)


class TestBuildCvxBasis:
    def test_pinned_small_instance(self):
        basis = build_cvx_basis(1 / 8)
        assert (basis.m, basis.t) == (8, 2)
        assert basis.mu == pytest.approx(1 / 72)
        assert basis.relu_offsets == (0, 2, 4, 6)
        assert "relu0" in basis.names and "const" in basis.names

    def test_identity_hinge_present(self):
        basis = build_cvx_basis(0.1)
        pos = basis.relu_index[0]
        vals = basis.element_values(pos)
        assert_allclose(vals, np.arange(basis.m) / (basis.m - 1))

    def test_spacing_is_integer_cube_root_ceiling(self):
        for delta, m, t in [(1 / 8, 8, 2), (1 / 12, 16, 3), (1 / 200, 256, 7), (1 / 1000, 1024, 11)]:
            basis = build_cvx_basis(delta)
            assert (basis.m, basis.t) == (m, t)
            assert basis.mu == pytest.approx(1 / (12 * t * log2(m)))

    def test_size_bound_and_constant_recorded(self):
        basis = build_cvx_basis(1 / 200)
        assert basis.size <= 4 * basis.m ** (2 / 3) * log2(basis.m) ** 3
        assert basis.size_constant == pytest.approx(basis.size / (basis.m ** (2 / 3) * log2(basis.m) ** 3))

    def test_element_names_unique(self):
        basis = build_cvx_basis(1 / 12)
        assert len(set(basis.names)) == basis.size


class TestIntervalCertificates:
    def test_whole_domain_reproduces_ones(self):
        basis = build_what(0.25, 32)
        iv = DyadicInterval(5, 0, 32)
        cert = approximate_dyadic_interval(basis, iv)
        assert cert.sup_error <= 0.25

    def test_certificate_honesty(self):
        basis = build_what(0.7, 32, seed=1)
        for h, a in [(0, 5), (1, 3), (2, 7), (5, 0)]:
            iv = DyadicInterval(h, a, 32)
            cert = approximate_dyadic_interval(basis, iv)
            vals = np.zeros(32)
            vals[iv.lo : iv.hi + 1] = 1.0
            assert recompute_residual(basis, cert, vals) == pytest.approx(cert.sup_error, abs=1e-9)

    def test_general_interval_error_additive_in_pieces(self):
        basis = build_what(0.1, 8, seed=0)
        cert = approximate_interval(basis, 1, 6)
        pieces = dyadic_decompose(1, 6, 8)
        assert cert.sup_error <= len(pieces) * 0.1 + 1e-9
        assert cert.sup_error <= 2 * 0.1 * 3 + 1e-9

    def test_single_piece_matches_dyadic(self):
        basis = build_what(0.3, 16, seed=2)
        a = approximate_interval(basis, 4, 7)
        b = approximate_dyadic_interval(basis, DyadicInterval(2, 1, 16))
        assert a.sup_error == pytest.approx(b.sup_error, abs=1e-12)

    def test_mismatched_grid_rejected(self):
        basis = build_what(0.5, 16)
        with pytest.raises(ShapeError):
            approximate_dyadic_interval(basis, DyadicInterval(0, 1, 32))


class TestHingeCertificates:
    def test_stored_hinges_are_exact(self):
        basis = build_cvx_basis(1 / 50)  # m = 64
        for i in basis.relu_index:
            cert = approximate_relu(basis, i * basis.t)
            assert cert.sup_error <= 1e-9

    def test_bound_holds_everywhere(self):
        basis = build_cvx_basis(1 / 50)
        bound = (basis.t - 1) * 2 * basis.mu * log2(basis.m)
        for j in range(basis.m):
            assert approximate_relu(basis, j).sup_error <= bound + 1e-9

    def test_sweep_matches_single_target_route(self):
        basis = build_cvx_basis(1 / 50)
        errors, lambdas = relu_error_sweep(basis, with_lambda=True)
        for j in range(0, basis.m, 7):
            cert = approximate_relu(basis, j)
            assert errors[j] == pytest.approx(cert.sup_error, abs=1e-9)
            assert lambdas[j] == pytest.approx(cert.lam, abs=1e-6)

    def test_certificate_honesty(self):
        basis = build_cvx_basis(1 / 12)  # m = 16, small enough to densify
        for j in [0, 1, 5, 11, 15]:
            cert = approximate_relu(basis, j)
            target = relu(j, basis.m).values
            assert recompute_residual(basis, cert, target) == pytest.approx(cert.sup_error, abs=1e-9)

    def test_out_of_range(self):
        basis = build_cvx_basis(1 / 8)
        with pytest.raises(IndexOutOfRangeError):
            approximate_relu(basis, 8)

    def test_levels_only_basis_refuses(self):
        basis = build_what(0.25, 16)
        with pytest.raises(CorruptBasisError):
            approximate_relu(basis, 3)


class TestConvexCertificates:
    def test_constant_target(self):
        basis = build_cvx_basis(1 / 12)
        f = GridFunction(basis.m, np.full(basis.m, 0.4))
        cert = approximate_convex(basis, f)
        assert cert.sup_error <= 1e-12
        assert set(cert.coefficients) == {"const"}
        assert cert.lam == 0.0

    def test_unnormalized_basis_hinge_is_exact(self):
        basis = build_cvx_basis(1 / 12)
        j = basis.t * 2
        f = relu(j, basis.m)
        assert approximate_convex(basis, f).sup_error <= 1e-9

    def test_vee_function_within_half(self):
        basis = build_cvx_basis(1 / 50)
        m = basis.m
        f = GridFunction(m, np.abs(np.arange(m, dtype=float) - m / 2))
        assert approximate_convex(basis, f).sup_error <= 0.5 + 1e-9

    def test_rejects_inadmissible(self):
        basis = build_cvx_basis(1 / 8)
        bump = GridFunction(8, np.array([0, 1, 0, 0, 0, 0, 0, 0.0]))
        with pytest.raises(NotConvexLipschitzError) as exc:
            approximate_convex(basis, bump)
        assert exc.value.constraint == "convexity"
        steep = GridFunction(8, 2.0 * np.arange(8))
        with pytest.raises(NotConvexLipschitzError) as exc:
            approximate_convex(basis, steep)
        assert exc.value.constraint == "lipschitz"

    def test_batch_sweep_matches_single_route(self):
        basis = build_cvx_basis(1 / 50)
        rng = np.random.default_rng(9)
        fs = [random_convex_lipschitz(basis.m, rng) for _ in range(10)]
        batch = convex_error_sweep(basis, fs)
        singles = [approximate_convex(basis, f).sup_error for f in fs]
        assert_allclose(batch, singles, atol=1e-9)

    def test_certificate_honesty(self):
        basis = build_cvx_basis(1 / 12)
        rng = np.random.default_rng(4)
        f = random_convex_lipschitz(basis.m, rng)
        cert = approximate_convex(basis, f)
        assert recompute_residual(basis, cert, f.values) == pytest.approx(cert.sup_error, abs=1e-9)


class TestMinimaxFit:
    def test_element_in_span(self):
        basis = spaced_hinge_basis(32, 4)
        target = GridFunction(32, basis.element_values(2) * 3.0)
        _, err = minimax_fit(basis, target)
        assert err <= 1e-6

    def test_dominates_constructive_route(self):
        basis = build_cvx_basis(1 / 12)
        for j in [1, 7, 13]:
            cert = approximate_relu(basis, j)
            _, err = minimax_fit(basis, relu(j, basis.m))
            assert err <= cert.sup_error + 1e-6

    def test_probe_separates_convex_from_mixed(self):
        # qualitative gap at matched budget; quantitative probe runs at m=1024
        basis = spaced_hinge_basis(64, 4)
        rng = np.random.default_rng(1)
        from artifact.gridfn import random_lipschitz

        cvx = np.mean([minimax_fit(basis, random_convex_lipschitz(64, rng))[1] for _ in range(8)])
        mixed = np.mean([minimax_fit(basis, random_lipschitz(64, rng))[1] for _ in range(8)])
        assert mixed > cvx


class TestPersistence:
    def test_round_trip_and_recertification(self, tmp_path):
        basis = build_cvx_basis(1 / 12, seed=3)
        path = tmp_path / "basis.npz"
        save_basis(basis, path)
        back = load_basis(path)
        assert back.names == basis.names
        assert back.m == basis.m and back.t == basis.t and back.mu == basis.mu
        report = certify_basis(back)
        assert report["worst_offdiag"] <= basis.mu
        assert report["worst_hinge_error"] <= (basis.t - 1) * 2 * basis.mu * log2(basis.m) + 1e-9

    def test_tamper_detected(self, tmp_path):
        basis = build_cvx_basis(1 / 8, seed=0)
        path = tmp_path / "basis.npz"
        save_basis(basis, path)
        back = load_basis(path)
        hacked = back.relu_values.copy()
        hacked[0, -1] += 0.5
        object.__setattr__(back, "relu_values", hacked)
        with pytest.raises(CorruptBasisError):
            certify_basis(back)
