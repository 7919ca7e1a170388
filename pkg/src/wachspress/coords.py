"""Wachspress coordinates on a simple convex polytope: values, exact mixed
partial derivatives of any order, and certified derivative bounds.

The coordinate of vertex v is ``phi_v = w_v / W`` with the polynomial weight
``w_v = det(M_v) * prod of h_f over facets not incident to v`` and
``W = sum of all w_v``. Derivatives are assembled from three exact pieces:

* ``D^nu w_v`` — the weight is a product of linear forms, so its Taylor
  coefficients at a point are computed by multiplying truncated polynomials
  (one linear factor per non-incident facet);
* ``D^beta (1/W)`` — chain-rule expansion of the reciprocal via the
  multivariate Faa di Bruno formula over partition sets from ``multiindex``;
* ``D^alpha phi_v`` — the general Leibniz product rule combining the two.

Everything is evaluated in a shifted and scaled local frame (centroid at the
origin, diameter 1) and rescaled analytically, so tiny polytopes do not lose
precision or overflow in the reciprocal powers. A second, independent
derivative path (``d_phi_quotient``) recursively solves the product rule for
``w_v = phi_v * W`` and exists to cross-check the main expansion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from . import multiindex as mi
from .multiindex import MultiIndex
from .polytope import GeometryError, Polytope


@lru_cache(maxsize=None)
def _index_layout(d: int, max_order: int):
    """Graded index list, position lookup, and per-index reduction steps
    (component i, position of gamma - e_i) used by the product recurrence."""
    idxs = mi.graded_indices(d, max_order)
    pos = {g: i for i, g in enumerate(idxs)}
    steps = []
    for g in idxs:
        red = []
        for i in range(d):
            if g[i] > 0:
                lower = tuple(c - 1 if j == i else c for j, c in enumerate(g))
                red.append((i, pos[lower]))
        steps.append(tuple(red))
    return idxs, pos, tuple(steps)


@lru_cache(maxsize=None)
def _inv_terms(beta: MultiIndex):
    """Precompiled terms of the reciprocal chain rule for one beta > 0.

    Returns tuples (lam, coeff, index_positions, powers) where the term value
    is coeff * W^-(lam+1) * prod over j of (D^{l_j} W)^{k_j}; coeff collects
    (-1)^lam * lam! * beta! / prod(k_j! * (l_j!)^k_j) as an exact float.
    """
    d = len(beta)
    _, pos, _ = _index_layout(d, mi.order(beta))
    out = []
    for lam in range(1, mi.order(beta) + 1):
        for term in mi.fdb_partitions(beta, lam):
            denom = 1
            for k, l in zip(term.multiplicities, term.indices):
                denom *= math.factorial(k) * mi.factorial(l) ** k
            coeff = Fraction(
                (-1) ** lam * math.factorial(lam) * mi.factorial(beta), denom
            )
            out.append((
                lam,
                float(coeff),
                tuple(pos[l] for l in term.indices),
                term.multiplicities,
            ))
    return tuple(out)


@dataclass(frozen=True)
class BoundTerm:
    """One certified-bound contribution from the reciprocal expansion."""

    beta: MultiIndex
    lam: int
    partition_id: int
    value: float


@dataclass(frozen=True)
class BoundBreakdown:
    """Certified upper bound for max over K of |D^alpha phi_v|, any v.

    ``total`` is ``base_term`` (the beta = 0 contribution) plus the sum of
    ``per_term`` values. Every piece is non-negative by construction.
    """

    alpha: MultiIndex
    total: float
    base_term: float
    per_term: tuple[BoundTerm, ...]
    w_low: float


class WachspressBasis:
    """Per-polytope precomputation enabling evaluation of the coordinates and
    their derivatives at arbitrary points.

    Immutable after construction; evaluations at distinct points are
    independent pure reads.
    """

    def __init__(self, poly: Polytope):
        self.polytope = poly
        self.dim = poly.dim
        self.n_vertices = poly.n_vertices
        self.n_facets = poly.n_facets
        self.h_k = poly.diameter()
        self.h_star = poly.h_star()

        self._center = poly.vertices.mean(axis=0)
        self._scale = self.h_k
        self._normals = np.stack([f.normal for f in poly.facets])
        offsets = np.array([f.offset for f in poly.facets])
        self._local_offsets = (offsets - self._normals @ self._center) / self._scale

        self.det_m = np.array([poly.det_m(v) for v in range(poly.n_vertices)])
        lower = (self.h_star / self.h_k) ** self.dim
        if np.any(self.det_m < lower * (1.0 - 1e-12)) or np.any(self.det_m > 1.0 + 1e-12):
            raise GeometryError(
                "det(M_v) outside its certified range; polytope data is inconsistent"
            )

        self._non_incident = []
        for v in range(poly.n_vertices):
            inc = set(poly.vertex_facets[v])
            self._non_incident.append(
                np.array([f for f in range(poly.n_facets) if f not in inc], dtype=int)
            )

    # -- frames --------------------------------------------------------------

    def _as_points(self, x) -> tuple[np.ndarray, bool]:
        pts = np.asarray(x, dtype=float)
        single = pts.ndim == 1
        return np.atleast_2d(pts), single

    def _to_local(self, pts: np.ndarray) -> np.ndarray:
        return (pts - self._center) / self._scale

    def _local_heights(self, local_pts: np.ndarray) -> np.ndarray:
        """(N, n_facets) matrix of facet distances in the local frame."""
        return self._local_offsets[None, :] - local_pts @ self._normals.T

    # -- local-frame derivative tables ----------------------------------------

    def _weight_tables(self, local_pts: np.ndarray, max_order: int) -> np.ndarray:
        """D^gamma of every local weight at every point.

        Returns an (n_vertices, n_indices, N) array over the graded index list
        of total order <= max_order. Computed per vertex by multiplying the
        truncated Taylor polynomials of its non-incident linear factors.
        """
        idxs, _, steps = _index_layout(self.dim, max_order)
        n_idx = len(idxs)
        n = local_pts.shape[0]
        heights = self._local_heights(local_pts)
        gamma_fact = np.array([mi.factorial(g) for g in idxs], dtype=float)

        out = np.empty((self.n_vertices, n_idx, n))
        for v in range(self.n_vertices):
            coeff = np.zeros((n_idx, n))
            coeff[0] = self.det_m[v]
            for f in self._non_incident[v]:
                nxt = coeff * heights[:, f][None, :]
                normal = self._normals[f]
                for g in range(1, n_idx):
                    for i, low in steps[g]:
                        nxt[g] -= normal[i] * coeff[low]
                coeff = nxt
            out[v] = coeff * gamma_fact[:, None]
        return out

    def _inv_w_tables(self, w_sum: np.ndarray, max_order: int) -> np.ndarray:
        """D^beta (1/W) in the local frame from the W derivative table.

        ``w_sum`` is the (n_indices, N) table of D^gamma W; beta = 0 gives
        1/W, beta > 0 the Faa di Bruno reciprocal expansion.
        """
        idxs, _, _ = _index_layout(self.dim, max_order)
        inv = np.empty_like(w_sum)
        inv_w = 1.0 / w_sum[0]
        inv[0] = inv_w
        for b, beta in enumerate(idxs):
            if mi.order(beta) == 0:
                continue
            acc = np.zeros_like(inv_w)
            for lam, coeff, positions, powers in _inv_terms(beta):
                term = np.full_like(inv_w, coeff)
                term *= inv_w ** (lam + 1)
                for p, k in zip(positions, powers):
                    term *= w_sum[p] ** k
                acc += term
            inv[b] = acc
        return inv

    def _dphi_tables(self, local_pts: np.ndarray,
                     alphas: Sequence[MultiIndex]) -> np.ndarray:
        """Local-frame D^alpha phi_v for the requested alphas.

        Returns (n_alphas, n_vertices, N).
        """
        max_order = max(mi.order(a) for a in alphas)
        idxs, pos, _ = _index_layout(self.dim, max_order)
        wt = self._weight_tables(local_pts, max_order)
        w_sum = wt.sum(axis=0)
        inv = self._inv_w_tables(w_sum, max_order)

        out = np.zeros((len(alphas), self.n_vertices, local_pts.shape[0]))
        for a, alpha in enumerate(alphas):
            for beta in mi.enumerate_le(alpha):
                c = mi.binomial(alpha, beta)
                out[a] += c * wt[:, pos[mi.sub(alpha, beta)], :] * inv[pos[beta]][None, :]
        return out

    # -- public evaluation ----------------------------------------------------

    def weight(self, v: int, x) -> float:
        """w_v(x): the polynomial weight (evaluated everywhere, meaningful
        inside K; use ``polytope.contains`` to flag exterior points)."""
        pts, _ = self._as_points(x)
        h = self._local_heights(self._to_local(pts))[0]
        prod = self.det_m[v] * np.prod(h[self._non_incident[v]])
        return float(prod * self._scale ** (self.n_facets - self.dim))

    def weight_sum(self, x) -> float:
        """W(x) = sum of all weights; positive on K."""
        pts, _ = self._as_points(x)
        h = self._local_heights(self._to_local(pts))[0]
        total = 0.0
        for v in range(self.n_vertices):
            total += self.det_m[v] * np.prod(h[self._non_incident[v]])
        return float(total * self._scale ** (self.n_facets - self.dim))

    def phi_all(self, x) -> np.ndarray:
        """All coordinates at x: non-negative on K, summing to 1."""
        pts, _ = self._as_points(x)
        h = self._local_heights(self._to_local(pts))[0]
        w = np.array([
            self.det_m[v] * np.prod(h[self._non_incident[v]])
            for v in range(self.n_vertices)
        ])
        return w / w.sum()

    def phi(self, v: int, x) -> float:
        return float(self.phi_all(x)[v])

    def phi_table(self, points) -> np.ndarray:
        """(n_vertices, N) coordinate values at a batch of points."""
        pts, _ = self._as_points(points)
        wt = self._weight_tables(self._to_local(pts), 0)[:, 0, :]
        return wt / wt.sum(axis=0, keepdims=True)

    def d_weight_at(self, v: int, nu: MultiIndex, x) -> float:
        """Exact mixed partial D^nu w_v(x); identically 0 once |nu| exceeds
        the weight's polynomial degree |F| - d."""
        nu = mi.as_multi_index(nu)
        if mi.order(nu) > self.n_facets - self.dim:
            return 0.0
        pts, _ = self._as_points(x)
        _, pos, _ = _index_layout(self.dim, mi.order(nu))
        table = self._weight_tables(self._to_local(pts), mi.order(nu))
        power = self.n_facets - self.dim - mi.order(nu)
        return float(table[v, pos[nu], 0] * self._scale ** power)

    def d_weight_sum_at(self, nu: MultiIndex, x) -> float:
        """D^nu W(x)."""
        nu = mi.as_multi_index(nu)
        if mi.order(nu) > self.n_facets - self.dim:
            return 0.0
        return float(sum(self.d_weight_at(v, nu, x) for v in range(self.n_vertices)))

    def d_inv_w_at(self, beta: MultiIndex, x) -> float:
        """D^beta (1/W)(x) via the reciprocal chain-rule expansion."""
        beta = mi.as_multi_index(beta)
        pts, _ = self._as_points(x)
        _, pos, _ = _index_layout(self.dim, mi.order(beta))
        local = self._to_local(pts)
        w_sum = self._weight_tables(local, mi.order(beta)).sum(axis=0)
        inv = self._inv_w_tables(w_sum, mi.order(beta))
        power = -(self.n_facets - self.dim) - mi.order(beta)
        return float(inv[pos[beta], 0] * self._scale ** power)

    def d_phi_at(self, v: int, alpha: MultiIndex, x) -> float:
        """D^alpha phi_v(x); reduces to phi_v for alpha = 0."""
        alpha = mi.as_multi_index(alpha)
        pts, _ = self._as_points(x)
        table = self._dphi_tables(self._to_local(pts), [alpha])
        return float(table[0, v, 0] * self._scale ** (-mi.order(alpha)))

    def d_phi_table(self, alphas: Iterable[MultiIndex], points) -> np.ndarray:
        """(n_alphas, n_vertices, N) array of D^alpha phi_v at a point batch."""
        alphas = [mi.as_multi_index(a) for a in alphas]
        pts, _ = self._as_points(points)
        table = self._dphi_tables(self._to_local(pts), alphas)
        for a, alpha in enumerate(alphas):
            table[a] *= self._scale ** (-mi.order(alpha))
        return table

    def d_phi_quotient(self, v: int, alpha: MultiIndex, x) -> float:
        """Independent derivative path: recursively solve the product rule
        for w_v = phi_v * W, i.e.

            D^alpha phi = (D^alpha w - sum over 0 < beta <= alpha of
                           C(alpha, beta) D^beta W D^(alpha-beta) phi) / W.
        """
        alpha = mi.as_multi_index(alpha)
        w_at = self.weight_sum(x)
        memo: dict[MultiIndex, float] = {}

        def rec(a: MultiIndex) -> float:
            if a in memo:
                return memo[a]
            if mi.order(a) == 0:
                val = self.phi(v, x)
            else:
                acc = self.d_weight_at(v, a, x)
                for b in mi.enumerate_le(a):
                    if mi.order(b) == 0:
                        continue
                    acc -= mi.binomial(a, b) * self.d_weight_sum_at(b, x) * rec(mi.sub(a, b))
                val = acc / w_at
            memo[a] = val
            return val

        return rec(alpha)

    def directional_d_phi(self, v: int, tau, m: int, x) -> float:
        """m-th directional derivative of phi_v along the unit vector tau:
        sum over |alpha| = m of (m!/alpha!) tau^alpha D^alpha phi_v."""
        tau = np.asarray(tau, dtype=float)
        if abs(float(np.linalg.norm(tau)) - 1.0) > 1e-9:
            raise ValueError("tau must be a unit vector")
        alphas = [a for a in mi.graded_indices(self.dim, m) if mi.order(a) == m]
        table = self.d_phi_table(alphas, x)
        total = 0.0
        for a, alpha in enumerate(alphas):
            coeff = math.factorial(m) / mi.factorial(alpha)
            total += coeff * float(np.prod(tau ** np.array(alpha))) * table[a, v, 0]
        return total

    # -- certified bounds ------------------------------------------------------

    def detm_bounds(self, v: int) -> tuple[float, float, float]:
        """(lower, actual, upper) for det(M_v): the certified range is
        (h_star/h_K)^d <= det(M_v) <= 1."""
        lower = (self.h_star / self.h_k) ** self.dim
        actual = float(self.det_m[v])
        if not lower * (1.0 - 1e-12) <= actual <= 1.0 + 1e-12:
            raise GeometryError(f"det(M_v) bound violated at vertex {v}")
        return lower, actual, 1.0

    def bound_grad_w(self, k: int) -> float:
        """Upper bound for |grad^k w_v| on K:
        (|F|-d)! / (|F|-d-k)! * h_K^(|F|-d-k)."""
        deg = self.n_facets - self.dim
        if not 0 <= k <= deg:
            raise ValueError(f"need 0 <= k <= {deg}, got {k}")
        return math.exp(self._log_bound_grad_w(k))

    def bound_dw(self, k: int) -> float:
        """Upper bound for |D^nu W| with |nu| = k: |V| times bound_grad_w."""
        return self.n_vertices * self.bound_grad_w(k)

    def w_lower_bound(self) -> float:
        """Certified positive lower bound of W on K:
        h_star^|F| / ((d+1)^(|F|-d) h_K^d)."""
        return math.exp(self._log_w_lower_bound())

    def _log_bound_grad_w(self, k: int) -> float:
        deg = self.n_facets - self.dim
        return (
            math.lgamma(deg + 1) - math.lgamma(deg - k + 1)
            + (deg - k) * math.log(self.h_k)
        )

    def _log_w_lower_bound(self) -> float:
        f, d = self.n_facets, self.dim
        return f * math.log(self.h_star) - (f - d) * math.log(d + 1) - d * math.log(self.h_k)

    def certified_dphi_bound(self, alpha: MultiIndex) -> BoundBreakdown:
        """Assemble a valid upper bound for max over K of |D^alpha phi_v|
        (any v) by bounding each term of the derivative expansion with the
        weight-derivative bounds and the W lower bound.

        Terms whose weight derivative order exceeds |F| - d vanish and are
        dropped. Computation runs in log space so extreme aspect ratios do not
        overflow intermediate reciprocal powers; a term that still exceeds the
        float range is reported as ``inf`` (a valid if useless bound).
        """
        alpha = mi.as_multi_index(alpha)
        deg = self.n_facets - self.dim
        log_w_low = self._log_w_lower_bound()
        log_nv = math.log(self.n_vertices)

        def safe_exp(t: float) -> float:
            try:
                return math.exp(t)
            except OverflowError:
                return math.inf

        base = 0.0
        if mi.order(alpha) <= deg:
            base = safe_exp(self._log_bound_grad_w(mi.order(alpha)) - log_w_low)

        terms: list[BoundTerm] = []
        for beta in mi.enumerate_le(alpha):
            if mi.order(beta) == 0:
                continue
            rest = mi.sub(alpha, beta)
            if mi.order(rest) > deg:
                continue
            for lam in range(1, mi.order(beta) + 1):
                for pid, part in enumerate(mi.fdb_partitions(beta, lam)):
                    if any(mi.order(l) > deg for l in part.indices):
                        continue
                    denom = 1
                    for k, l in zip(part.multiplicities, part.indices):
                        denom *= math.factorial(k) * mi.factorial(l) ** k
                    coeff = Fraction(
                        mi.binomial(alpha, beta) * math.factorial(lam) * mi.factorial(beta),
                        denom,
                    )
                    log_val = (
                        math.log(coeff)
                        + self._log_bound_grad_w(mi.order(rest))
                        + sum(
                            k * (log_nv + self._log_bound_grad_w(mi.order(l)))
                            for k, l in zip(part.multiplicities, part.indices)
                        )
                        - (1 + lam) * log_w_low
                    )
                    terms.append(BoundTerm(beta, lam, pid, safe_exp(log_val)))

        total = base + sum(t.value for t in terms)
        return BoundBreakdown(
            alpha=alpha, total=total, base_term=base,
            per_term=tuple(terms), w_low=math.exp(log_w_low),
        )

    def lambda_alpha(self, alpha: MultiIndex, density: int = 40) -> float:
        """Polygon-wide maximum of sum over v of |D^alpha phi_v|, taken over
        a dense sample grid of the closed polygon."""
        from .experiments import lambda_over_grid

        lam, _, _ = lambda_over_grid(self, mi.as_multi_index(alpha), density)
        return lam

    # -- alternative weight (interior-only cross-check) -----------------------

    def phi_all_reciprocal(self, x) -> np.ndarray:
        """Coordinates from the reciprocal weight det(M_v) / prod of incident
        facet distances. Valid strictly inside K only (the incident distances
        vanish on the boundary); exists as a cross-check of ``phi_all``."""
        pts, _ = self._as_points(x)
        h = self._local_heights(self._to_local(pts))[0]
        w = np.empty(self.n_vertices)
        for v in range(self.n_vertices):
            inc = list(self.polytope.vertex_facets[v])
            denom = np.prod(h[inc])
            if denom <= 0.0:
                raise ZeroDivisionError(
                    "reciprocal weight is undefined on the boundary"
                )
            w[v] = self.det_m[v] / denom
        return w / w.sum()
