"""Tests for coordinate evaluation, exact derivatives, and certified bounds.

Three independent oracles anchor the derivative engine:

* a dense monomial-expansion oracle for weight derivatives (convolve the
  linear factors into polynomial coefficients, differentiate those);
* the recursive quotient-rule path shipped in the package;
* high-precision central finite differences (mpmath) for phi derivatives.
"""
from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest

from wachspress import WachspressBasis, build_from_vertices_2d
from wachspress import multiindex as mi
from wachspress.coords import _inv_terms
from wachspress.polytope import GeometryError

from conftest import SQUARE, TRIANGLE, boundary_points, interior_points, polygon_corpus


# -- oracles -----------------------------------------------------------------

def monomial_weight_coeffs(basis: WachspressBasis, v: int) -> np.ndarray:
    """Dense coefficient matrix of w_v in the original frame: entry (i, j)
    multiplies x^i y^j. Built by polynomial convolution of linear factors."""
    poly = basis.polytope
    coeffs = np.zeros((1, 1))
    coeffs[0, 0] = basis.det_m[v]
    for f in range(poly.n_facets):
        if f in poly.vertex_facets[v]:
            continue
        fac = poly.facets[f]
        lin = np.zeros((2, 2))
        lin[0, 0] = fac.offset
        lin[1, 0] = -fac.normal[0]
        lin[0, 1] = -fac.normal[1]
        out = np.zeros((coeffs.shape[0] + 1, coeffs.shape[1] + 1))
        for di in range(2):
            for dj in range(2):
                if lin[di, dj] != 0.0:
                    out[di:di + coeffs.shape[0], dj:dj + coeffs.shape[1]] += (
                        lin[di, dj] * coeffs
                    )
        coeffs = out
    return coeffs


def monomial_d_weight(basis: WachspressBasis, v: int, nu, x) -> float:
    """Oracle for D^nu w_v: differentiate the monomial coefficients."""
    c = monomial_weight_coeffs(basis, v)
    a, b = nu
    if a >= c.shape[0] or b >= c.shape[1]:
        return 0.0
    shifted = c[a:, b:].copy()
    for i in range(shifted.shape[0]):
        shifted[i, :] *= math.factorial(i + a) / math.factorial(i)
    for j in range(shifted.shape[1]):
        shifted[:, j] *= math.factorial(j + b) / math.factorial(j)
    return float(np.polynomial.polynomial.polyval2d(x[0], x[1], shifted))


_STENCILS = {
    0: {0: 1.0},
    1: {-1: -0.5, 1: 0.5},
    2: {-1: 1.0, 0: -2.0, 1: 1.0},
    3: {-2: -0.5, -1: 1.0, 1: -1.0, 2: 0.5},
}


def fd_d_phi(basis: WachspressBasis, v: int, alpha, x, rel_step: float = 1e-5,
             dps: int = 30) -> float:
    """Central finite differences of phi_v in extended precision.

    The step is rel_step * h_K; extended precision removes the subtractive
    round-off that double precision would hit at third order.
    """
    mp.mp.dps = dps
    poly = basis.polytope
    h = mp.mpf(rel_step) * mp.mpf(basis.h_k)
    normals = [(mp.mpf(f.normal[0]), mp.mpf(f.normal[1])) for f in poly.facets]
    offsets = [mp.mpf(f.offset) for f in poly.facets]
    dets = [mp.mpf(float(d)) for d in basis.det_m]
    non_inc = [
        [f for f in range(poly.n_facets) if f not in poly.vertex_facets[u]]
        for u in range(poly.n_vertices)
    ]

    def phi(px, py):
        hs = [offsets[f] - normals[f][0] * px - normals[f][1] * py
              for f in range(poly.n_facets)]
        ws = []
        for u in range(poly.n_vertices):
            w = dets[u]
            for f in non_inc[u]:
                w *= hs[f]
            ws.append(w)
        return ws[v] / mp.fsum(ws)

    total = mp.mpf(0)
    for ox, cx in _STENCILS[alpha[0]].items():
        for oy, cy in _STENCILS[alpha[1]].items():
            total += mp.mpf(cx) * mp.mpf(cy) * phi(
                mp.mpf(x[0]) + ox * h, mp.mpf(x[1]) + oy * h
            )
    return float(total / h ** (alpha[0] + alpha[1]))


def assert_close_fielded(got, want, scale, rel):
    assert abs(got - want) <= rel * max(abs(got), abs(want), scale)


ALPHAS_123 = [a for a in mi.graded_indices(2, 3) if mi.order(a) >= 1]


# -- weights and coordinates ---------------------------------------------------

class TestWeights:
    def test_square_bilinear_weight(self, square):
        b = WachspressBasis(square)
        assert b.weight(0, (0.25, 0.25)) == pytest.approx(0.5625, abs=1e-14)
        x, y = 0.37, 0.81
        assert b.weight(0, (x, y)) == pytest.approx((1 - x) * (1 - y), rel=1e-13)

    def test_triangle_weight(self, triangle):
        b = WachspressBasis(triangle)
        want = (1 - 0.4) / math.sqrt(2)
        assert b.weight(0, (0.2, 0.2)) == pytest.approx(want, rel=1e-13)

    def test_weight_vanishes_only_on_boundary(self, square):
        b = WachspressBasis(square)
        # at the non-adjacent vertex, some non-incident facet passes through it
        assert b.weight(0, (1.0, 1.0)) == pytest.approx(0.0, abs=1e-15)
        assert b.weight(0, (0.5, 0.5)) > 0.0

    def test_weight_sum_square_is_one(self, square):
        b = WachspressBasis(square)
        for x in [(0.1, 0.9), (0.5, 0.5), (0.0, 0.0), (1.0, 0.3)]:
            assert b.weight_sum(x) == pytest.approx(1.0, abs=1e-13)

    def test_weight_sum_triangle_direct_summation(self, triangle):
        b = WachspressBasis(triangle)
        x = (1 / 3, 1 / 3)
        direct = sum(b.weight(v, x) for v in range(3))
        assert b.weight_sum(x) == pytest.approx(direct, rel=1e-14)

    def test_weight_sum_above_certified_floor(self):
        for poly in polygon_corpus(11, 3):
            b = WachspressBasis(poly)
            rng = np.random.default_rng(0)
            floor = b.w_lower_bound()
            for x in interior_points(poly, rng, 200):
                assert b.weight_sum(x) >= floor


class TestPhi:
    def test_square_center(self, square):
        assert np.allclose(WachspressBasis(square).phi_all((0.5, 0.5)), 0.25)

    def test_vertex_indicator(self):
        for poly in polygon_corpus(3, 2):
            b = WachspressBasis(poly)
            for v in range(poly.n_vertices):
                vals = b.phi_all(poly.vertices[v])
                want = np.zeros(poly.n_vertices)
                want[v] = 1.0
                assert np.allclose(vals, want, atol=1e-12)

    def test_triangle_barycentric(self, triangle):
        b = WachspressBasis(triangle)
        assert b.phi(0, (0.2, 0.3)) == pytest.approx(0.5, rel=1e-13)

    def test_partition_of_unity_and_linear_precision(self):
        for poly in polygon_corpus(5, 3):
            b = WachspressBasis(poly)
            rng = np.random.default_rng(1)
            pts = interior_points(poly, rng, 50)
            table = b.phi_table(pts)
            assert np.allclose(table.sum(axis=0), 1.0, atol=1e-12)
            recon = np.einsum("vn,vd->nd", table, poly.vertices)
            assert np.allclose(recon, pts, atol=1e-12)
            assert np.all(table >= -1e-12)


# -- weight derivatives --------------------------------------------------------

class TestWeightDerivatives:
    def test_square_analytic(self, square):
        b = WachspressBasis(square)
        assert b.d_weight_at(0, (1, 0), (0.0, 0.0)) == pytest.approx(-1.0, rel=1e-13)
        for x in [(0.3, 0.4), (0.9, 0.1)]:
            assert b.d_weight_at(0, (1, 1), x) == pytest.approx(1.0, rel=1e-13)

    def test_identically_zero_beyond_degree(self, square):
        b = WachspressBasis(square)
        assert b.d_weight_at(0, (3, 0), (0.3, 0.3)) == 0.0
        assert b.d_weight_at(0, (2, 1), (0.3, 0.3)) == 0.0

    def test_matches_monomial_oracle(self):
        for poly in polygon_corpus(7, 3):
            b = WachspressBasis(poly)
            rng = np.random.default_rng(2)
            pts = interior_points(poly, rng, 5)
            for v in range(0, poly.n_vertices, 2):
                for nu in ALPHAS_123:
                    for x in pts:
                        want = monomial_d_weight(b, v, nu, x)
                        got = b.d_weight_at(v, nu, x)
                        assert_close_fielded(got, want, 1e-12, 1e-9)

    def test_weight_sum_derivative_square(self, square):
        b = WachspressBasis(square)
        for nu in ALPHAS_123:
            assert b.d_weight_sum_at(nu, (0.3, 0.8)) == pytest.approx(0.0, abs=1e-13)

    def test_weight_sum_derivative_affine_on_triangle(self, triangle):
        b = WachspressBasis(triangle)
        v1 = b.d_weight_sum_at((1, 0), (0.2, 0.2))
        v2 = b.d_weight_sum_at((1, 0), (0.6, 0.3))
        assert v1 == pytest.approx(v2, rel=1e-12)

    def test_weight_sum_derivative_matches_oracle_sum(self):
        poly = polygon_corpus(13, 1)[0]
        b = WachspressBasis(poly)
        x = poly.centroid()
        for nu in [(1, 0), (0, 1), (2, 0), (1, 1)]:
            want = sum(
                monomial_d_weight(b, v, nu, x) for v in range(poly.n_vertices)
            )
            assert b.d_weight_sum_at(nu, x) == pytest.approx(want, rel=1e-10)


class TestInverseWeightSum:
    def test_square_zero(self, square):
        b = WachspressBasis(square)
        for beta in ALPHAS_123:
            assert b.d_inv_w_at(beta, (0.4, 0.2)) == pytest.approx(0.0, abs=1e-12)

    def test_order_zero_is_reciprocal(self, triangle):
        b = WachspressBasis(triangle)
        x = (0.25, 0.3)
        assert b.d_inv_w_at((0, 0), x) == pytest.approx(1.0 / b.weight_sum(x), rel=1e-13)

    def test_second_derivatives_quotient_identity(self):
        poly = polygon_corpus(17, 1)[0]
        b = WachspressBasis(poly)
        x = poly.centroid()
        w = b.weight_sum(x)
        wx = b.d_weight_sum_at((1, 0), x)
        wy = b.d_weight_sum_at((0, 1), x)
        wxx = b.d_weight_sum_at((2, 0), x)
        wxy = b.d_weight_sum_at((1, 1), x)
        want_xx = -wxx / w ** 2 + 2 * wx ** 2 / w ** 3
        want_xy = -wxy / w ** 2 + 2 * wx * wy / w ** 3
        assert b.d_inv_w_at((2, 0), x) == pytest.approx(want_xx, rel=1e-11)
        assert b.d_inv_w_at((1, 1), x) == pytest.approx(want_xy, rel=1e-11)

    def test_univariate_reciprocal_matches_exact_rational_derivatives(self):
        # Classical single-variable sanity check of the chain-rule expansion:
        # derivatives of 1/g for a polynomial g, against exact rational
        # differentiation n = 1..4.
        from numpy.polynomial import Polynomial

        g = Polynomial([2.0, 1.0, 3.0, 1.0])
        for t in (0.0, 0.3, -0.4, 1.1):
            g_derivs = [g.deriv(n)(t) if n else g(t) for n in range(5)]
            inv_g = 1.0 / g_derivs[0]

            exact = [inv_g]
            num, k = Polynomial([1.0]), 1
            for _ in range(4):
                num = num.deriv() * g - k * num * g.deriv()
                k += 1
                exact.append(num(t) / g_derivs[0] ** k)

            for n in range(1, 5):
                total = 0.0
                for lam, coeff, positions, powers in _inv_terms((n,)):
                    term = coeff * inv_g ** (lam + 1)
                    for p, kk in zip(positions, powers):
                        term *= g_derivs[p] ** kk
                    total += term
                assert total == pytest.approx(exact[n], rel=1e-10)


# -- phi derivatives -----------------------------------------------------------

class TestPhiDerivatives:
    def test_square_mixed_partial_is_one(self, square):
        b = WachspressBasis(square)
        for x in [(0.2, 0.7), (0.5, 0.5), (0.0, 0.0)]:
            assert b.d_phi_at(0, (1, 1), x) == pytest.approx(1.0, rel=1e-12)

    def test_order_zero_reduces_to_phi(self, triangle):
        b = WachspressBasis(triangle)
        x = (0.2, 0.3)
        assert b.d_phi_at(0, (0, 0), x) == pytest.approx(b.phi(0, x), rel=1e-14)

    def test_triangle_higher_orders_vanish(self, triangle):
        b = WachspressBasis(triangle)
        for alpha in ALPHAS_123:
            if mi.order(alpha) < 2:
                continue
            for v in range(3):
                assert b.d_phi_at(v, alpha, (0.3, 0.3)) == pytest.approx(0.0, abs=1e-13)

    def test_matches_quotient_oracle(self):
        for poly in polygon_corpus(23, 3, h_k=1.0):
            b = WachspressBasis(poly)
            rng = np.random.default_rng(3)
            pts = np.vstack([
                interior_points(poly, rng, 6),
                boundary_points(poly, rng, 3),
            ])
            for alpha in ALPHAS_123:
                table = b.d_phi_table([alpha], pts)[0]
                scale = float(np.abs(table).max())
                for v in range(poly.n_vertices):
                    for k, x in enumerate(pts):
                        want = b.d_phi_quotient(v, alpha, x)
                        assert_close_fielded(table[v, k], want, scale, 1e-10)

    def test_matches_finite_differences(self):
        poly = polygon_corpus(29, 1, h_k=1.0)[0]
        b = WachspressBasis(poly)
        rng = np.random.default_rng(4)
        pts = np.vstack([
            interior_points(poly, rng, 3),
            boundary_points(poly, rng, 2),
        ])
        for alpha in ALPHAS_123:
            table = b.d_phi_table([alpha], pts)[0]
            scale = float(np.abs(table).max())
            for v in range(0, poly.n_vertices, 2):
                for k, x in enumerate(pts):
                    want = fd_d_phi(b, v, alpha, x)
                    assert_close_fielded(table[v, k], want, scale, 1e-5)

    def test_partition_of_unity_under_differentiation(self):
        for poly in polygon_corpus(31, 3, h_k=1.0):
            b = WachspressBasis(poly)
            rng = np.random.default_rng(5)
            pts = interior_points(poly, rng, 30)
            table = b.d_phi_table(ALPHAS_123, pts)
            for a in range(len(ALPHAS_123)):
                sums = table[a].sum(axis=0)
                lam = np.abs(table[a]).sum(axis=0).max()
                assert np.all(np.abs(sums) <= 1e-9 * max(1.0, lam))

    def test_linear_precision_under_differentiation(self):
        poly = polygon_corpus(37, 1, h_k=1.0)[0]
        b = WachspressBasis(poly)
        rng = np.random.default_rng(6)
        pts = interior_points(poly, rng, 20)
        table = b.d_phi_table(ALPHAS_123, pts)
        for a, alpha in enumerate(ALPHAS_123):
            recon = np.einsum("vn,vd->nd", table[a], poly.vertices)
            lam = np.abs(table[a]).sum(axis=0).max()
            tol = 1e-9 * max(1.0, lam)
            if mi.order(alpha) == 1:
                expected = np.array(alpha, dtype=float)  # e_1 or e_2
                assert np.all(np.abs(recon - expected[None, :]) <= tol)
            else:
                assert np.all(np.abs(recon) <= tol)

    def test_scale_covariance(self):
        poly = polygon_corpus(41, 1)[0]
        b = WachspressBasis(poly)
        rng = np.random.default_rng(7)
        pts = interior_points(poly, rng, 5)
        for s in (2.0, 1e-3, 137.0):
            scaled = build_from_vertices_2d(poly.vertices * s)
            bs = WachspressBasis(scaled)
            for alpha in [(1, 0), (2, 0), (1, 1), (2, 1)]:
                k = mi.order(alpha)
                for x in pts:
                    ref = b.d_phi_at(2, alpha, x)
                    got = bs.d_phi_at(2, alpha, x * s)
                    assert got * s ** k == pytest.approx(ref, rel=1e-9, abs=1e-12)

    def test_reciprocal_weight_formulation_agrees_inside(self):
        for poly in polygon_corpus(43, 2):
            b = WachspressBasis(poly)
            rng = np.random.default_rng(8)
            for x in interior_points(poly, rng, 20):
                a = b.phi_all(x)
                r = b.phi_all_reciprocal(x)
                assert np.allclose(a, r, rtol=1e-10, atol=1e-14)


class TestDirectional:
    def test_axis_directions_reduce_to_partials(self):
        poly = polygon_corpus(47, 1)[0]
        b = WachspressBasis(poly)
        x = poly.centroid()
        assert b.directional_d_phi(1, (1.0, 0.0), 2, x) == pytest.approx(
            b.d_phi_at(1, (2, 0), x), rel=1e-12
        )
        assert b.directional_d_phi(1, (0.0, 1.0), 3, x) == pytest.approx(
            b.d_phi_at(1, (0, 3), x), rel=1e-12
        )

    def test_diagonal_on_square(self, square):
        b = WachspressBasis(square)
        tau = (1 / math.sqrt(2), 1 / math.sqrt(2))
        assert b.directional_d_phi(0, tau, 2, (0.3, 0.6)) == pytest.approx(1.0, rel=1e-12)

    def test_rejects_non_unit_direction(self, square):
        with pytest.raises(ValueError):
            WachspressBasis(square).directional_d_phi(0, (1.0, 1.0), 2, (0.5, 0.5))


# -- certified bounds ------------------------------------------------------------

class TestBounds:
    def test_detm_bounds_square(self, square):
        b = WachspressBasis(square)
        for v in range(4):
            lower, actual, upper = b.detm_bounds(v)
            assert lower == pytest.approx(0.5, rel=1e-12)
            assert actual == pytest.approx(1.0, rel=1e-12)
            assert upper == 1.0

    def test_detm_regular_hexagon(self):
        pts = [
            (math.cos(k * math.pi / 3), math.sin(k * math.pi / 3)) for k in range(6)
        ]
        b = WachspressBasis(build_from_vertices_2d(pts))
        for v in range(6):
            _, actual, _ = b.detm_bounds(v)
            assert actual == pytest.approx(math.sqrt(3) / 2, rel=1e-12)

    def test_detm_triangle(self, triangle):
        b = WachspressBasis(triangle)
        right_angle_vertex = int(np.argmin(np.linalg.norm(triangle.vertices, axis=1)))
        other = (right_angle_vertex + 1) % 3
        assert b.detm_bounds(other)[1] == pytest.approx(1 / math.sqrt(2), rel=1e-12)

    def test_detm_in_range_random(self):
        for poly in polygon_corpus(53, 5):
            b = WachspressBasis(poly)
            for v in range(poly.n_vertices):
                lower, actual, upper = b.detm_bounds(v)
                assert lower <= actual <= upper

    def test_bound_grad_w_square(self, square):
        b = WachspressBasis(square)
        assert b.bound_grad_w(1) == pytest.approx(2 * math.sqrt(2), rel=1e-12)
        assert b.bound_grad_w(0) == pytest.approx(2.0, rel=1e-12)
        assert b.bound_grad_w(2) == pytest.approx(2.0, rel=1e-12)  # (|F|-d)!
        with pytest.raises(ValueError):
            b.bound_grad_w(3)
        with pytest.raises(ValueError):
            b.bound_grad_w(-1)

    def test_bound_dw_square(self, square):
        b = WachspressBasis(square)
        assert b.bound_dw(1) == pytest.approx(8 * math.sqrt(2), rel=1e-12)
        assert b.bound_dw(0) == pytest.approx(8.0, rel=1e-12)
        for k in range(3):
            assert b.bound_dw(k) == pytest.approx(4 * b.bound_grad_w(k), rel=1e-14)

    def test_w_lower_bound_values(self, square, triangle):
        assert WachspressBasis(square).w_lower_bound() == pytest.approx(1 / 18, rel=1e-12)
        assert WachspressBasis(triangle).w_lower_bound() == pytest.approx(
            1 / (12 * math.sqrt(2)), rel=1e-12
        )

    def test_w_lower_bound_scaling(self, triangle):
        b = WachspressBasis(triangle)
        s = 3.5
        bs = WachspressBasis(build_from_vertices_2d(triangle.vertices * s))
        power = b.n_facets - b.dim
        assert bs.w_lower_bound() == pytest.approx(
            b.w_lower_bound() * s ** power, rel=1e-11
        )

    def test_certified_bound_triangle_drops_terms(self, triangle):
        b = WachspressBasis(triangle)
        bb = b.certified_dphi_bound((2, 0))
        # weight is linear: the base (beta = 0) term vanished
        assert bb.base_term == 0.0
        assert bb.total >= 0.0
        assert all(t.value >= 0.0 for t in bb.per_term)
        assert bb.total == pytest.approx(bb.base_term + sum(t.value for t in bb.per_term))

    def test_certified_bound_square_exceeds_measured(self, square):
        b = WachspressBasis(square)
        bb = b.certified_dphi_bound((1, 0))
        assert bb.total >= 1.0  # measured max of |d phi / dx| is 1

    def test_certified_bound_dominates_samples_random(self):
        for poly in polygon_corpus(59, 3):
            b = WachspressBasis(poly)
            rng = np.random.default_rng(9)
            pts = np.vstack([
                interior_points(poly, rng, 40),
                boundary_points(poly, rng, 10),
            ])
            table = b.d_phi_table(ALPHAS_123, pts)
            for a, alpha in enumerate(ALPHAS_123):
                bound = b.certified_dphi_bound(alpha).total
                assert float(np.abs(table[a]).max()) <= bound

    def test_breakdown_consistency(self):
        poly = polygon_corpus(61, 1)[0]
        b = WachspressBasis(poly)
        bb = b.certified_dphi_bound((2, 1))
        assert bb.w_low == pytest.approx(b.w_lower_bound(), rel=1e-12)
        assert bb.total == pytest.approx(
            bb.base_term + sum(t.value for t in bb.per_term), rel=1e-12
        )


class TestValidation:
    def test_detm_invariant_guard(self, square):
        b = WachspressBasis(square)
        b.det_m = b.det_m.copy()
        b.det_m[0] = 2.0  # corrupt
        with pytest.raises(GeometryError):
            b.detm_bounds(0)
