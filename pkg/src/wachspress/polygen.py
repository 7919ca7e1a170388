"""2D polygon and mesh generation.

Provides seeded random convex polygons (convex hulls of uniform points in the
unit square), the three one-parameter hexagon families used in the short-edge
degeneration studies, Lloyd-iterated centroidal Voronoi tessellations of the
unit square, and the short-edge elimination pass that restores a healthy
vertex-to-facet distance in CVT meshes.

Randomness flows through :class:`RngStream`, a thin wrapper over numpy's
PCG64 generator: a fixed seed yields a byte-stable point stream, and batch
jobs derive per-item sub-seeds as ``seed XOR index`` so results never depend
on scheduling.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .polytope import (
    GeometryError,
    Polytope,
    build_from_vertices_2d,
    shape_report,
)

logger = logging.getLogger(__name__)


class AllCollinearError(GeometryError):
    pass


class MeshError(GeometryError):
    pass


@dataclass
class RngStream:
    """Seeded, portable random stream (numpy PCG64).

    The generator algorithm is pinned so identical seeds give identical
    streams on every platform.
    """

    seed: int
    algorithm: str = field(default="pcg64", init=False)

    def __post_init__(self) -> None:
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform_points(self, n: int) -> np.ndarray:
        """n uniform points in the unit square, shape (n, 2)."""
        return self._gen.random((n, 2))

    def uniform(self) -> float:
        return float(self._gen.random())

    def spawn(self, index: int) -> "RngStream":
        """Independent sub-stream for batch item ``index``."""
        return RngStream(self.seed ^ index)


# -- convex hull -------------------------------------------------------------

def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_2d(points: Sequence[Sequence[float]]) -> np.ndarray:
    """Strictly convex hull of a point set, CCW, collinear boundary points
    removed (monotone chain). Raises AllCollinearError when no polygon
    exists."""
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(pts) < 3:
        raise AllCollinearError("need at least 3 distinct points")

    def half(seq):
        out: list[tuple[float, float]] = []
        for p in seq:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= 0.0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(reversed(pts))
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise AllCollinearError("all points are collinear")
    return np.asarray(hull)


def random_convex_polygon(rng: RngStream, n_points: int = 20) -> Polytope:
    """Convex hull of ``n_points`` uniform samples in the unit square.

    Draws again from the same stream in the measure-zero event that the hull
    degenerates.
    """
    while True:
        pts = rng.uniform_points(n_points)
        try:
            return build_from_vertices_2d(convex_hull_2d(pts))
        except GeometryError:  # pragma: no cover - probability ~ 0
            continue


def scale_polygon(poly: Polytope, h: float) -> Polytope:
    """Uniformly scale a polygon so its diameter equals ``h``, centered at
    the origin. Shape ratios and angles are unchanged."""
    if h <= 0.0:
        raise ValueError("target diameter must be positive")
    factor = h / poly.diameter()
    centered = (poly.vertices - poly.vertices.mean(axis=0)) * factor
    return build_from_vertices_2d(centered)


# -- degeneration families ----------------------------------------------------

_FAMILY_TEMPLATES = {
    1: lambda a: [(0.0, 0.0), (a, 0.0), (0.8, 0.4), (0.7, 0.7), (0.1, 1.0), (-0.2, 0.5)],
    2: lambda a: [(0.0, 0.0), (0.0, a), (-0.6, 0.7), (-1.0, 0.4), (-0.9, 0.15), (-0.24, -0.2)],
    3: lambda a: [(0.0, 0.0), (a, a), (0.1, 0.7), (-0.2, 0.8), (-0.5, 0.5), (-0.5, -0.1)],
}


def family_k(which: int, a: float) -> Polytope:
    """One of the three hexagon families K1/K2/K3 whose second vertex slides
    toward the first along the x axis, the y axis, or the diagonal; as
    ``a -> 0`` the short edge degenerates and h_star -> 0."""
    if which not in _FAMILY_TEMPLATES:
        raise ValueError("family must be 1, 2 or 3")
    if not 0.0 < a < 1.0:
        raise ValueError("need 0 < a < 1")
    return build_from_vertices_2d(_FAMILY_TEMPLATES[which](a))


def shortest_edge(poly: Polytope) -> tuple[int, int]:
    """Vertex ids of the shortest edge of a polygon."""
    lengths = poly.edge_lengths()
    i = int(np.argmin(lengths))
    return i, (i + 1) % poly.n_vertices


# -- polygonal meshes ----------------------------------------------------------

@dataclass
class PolyMesh:
    """A conforming polygonal tessellation of a rectangle: shared vertex
    list plus CCW cell cycles."""

    vertices: np.ndarray                 # (n, 2)
    cells: list[list[int]]
    domain: tuple[float, float, float, float]  # x0, y0, x1, y1

    def cell_polygon(self, c: int) -> Polytope:
        return build_from_vertices_2d(self.vertices[self.cells[c]])

    def cell_area(self, c: int) -> float:
        v = self.vertices[self.cells[c]]
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def domain_area(self) -> float:
        x0, y0, x1, y1 = self.domain
        return (x1 - x0) * (y1 - y0)

    def characteristic_size(self) -> float:
        """sqrt(domain area / cell count): the natural site spacing scale."""
        return math.sqrt(self.domain_area() / len(self.cells))

    def mesh_size(self) -> float:
        """Largest cell diameter: the usual finite-element mesh size h."""
        best = 0.0
        for cell in self.cells:
            v = self.vertices[cell]
            diff = v[:, None, :] - v[None, :, :]
            best = max(best, float((diff ** 2).sum(axis=2).max()))
        return math.sqrt(best)

    def edges(self) -> dict[tuple[int, int], list[int]]:
        """Unique undirected edges mapped to their incident cell ids."""
        out: dict[tuple[int, int], list[int]] = {}
        for cid, cell in enumerate(self.cells):
            for i, u in enumerate(cell):
                v = cell[(i + 1) % len(cell)]
                key = (u, v) if u < v else (v, u)
                out.setdefault(key, []).append(cid)
        return out

    def validate(self) -> None:
        """Check the tessellation invariants: every cell is a valid convex
        polygon, areas sum to the domain area, and each edge borders one
        (boundary) or two (interior) cells."""
        total = 0.0
        for c in range(len(self.cells)):
            self.cell_polygon(c)
            total += self.cell_area(c)
        if abs(total - self.domain_area()) > 1e-6 * self.domain_area():
            raise MeshError(
                f"cell areas sum to {total}, expected {self.domain_area()}"
            )
        for (u, v), cids in self.edges().items():
            if len(cids) == 2:
                continue
            if len(cids) == 1 and self._edge_on_boundary(u, v):
                continue
            raise MeshError(
                f"edge ({u}, {v}) borders {len(cids)} cells and is not on "
                "the domain boundary"
            )

    def _edge_on_boundary(self, u: int, v: int, tol: float = 1e-9) -> bool:
        x0, y0, x1, y1 = self.domain
        pu, pv = self.vertices[u], self.vertices[v]
        for coord, val in ((0, x0), (0, x1), (1, y0), (1, y1)):
            if abs(pu[coord] - val) <= tol and abs(pv[coord] - val) <= tol:
                return True
        return False

    def to_json(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "cells": [list(c) for c in self.cells],
            "domain": list(self.domain),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PolyMesh":
        return cls(
            vertices=np.asarray(obj["vertices"], dtype=float),
            cells=[list(map(int, c)) for c in obj["cells"]],
            domain=tuple(float(x) for x in obj["domain"]),
        )


def _clip_half_plane(cell: list[tuple[float, float]], a: float, b: float,
                     c: float) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clip of a convex cell against a*x + b*y <= c."""
    out: list[tuple[float, float]] = []
    n = len(cell)
    for i in range(n):
        px, py = cell[i]
        qx, qy = cell[(i + 1) % n]
        p_in = a * px + b * py <= c
        q_in = a * qx + b * qy <= c
        if p_in:
            out.append((px, py))
            if not q_in:
                t = (c - a * px - b * py) / (a * (qx - px) + b * (qy - py))
                out.append((px + t * (qx - px), py + t * (qy - py)))
        elif q_in:
            t = (c - a * px - b * py) / (a * (qx - px) + b * (qy - py))
            out.append((px + t * (qx - px), py + t * (qy - py)))
    return out


def _voronoi_cell(i: int, sites: np.ndarray, order: np.ndarray,
                  dist: np.ndarray) -> list[tuple[float, float]]:
    """Voronoi cell of site i inside the unit square, by clipping against
    bisector half-planes of other sites in increasing distance.

    A site farther than twice the current cell's max distance from site i
    cannot cut the cell, so iteration stops early; this is exact, not an
    approximation.
    """
    sx, sy = sites[i]
    cell = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    r_max_sq = max((px - sx) ** 2 + (py - sy) ** 2 for px, py in cell)
    for j in order:
        dij = dist[j]
        if dij * dij > 4.0 * r_max_sq:
            break
        ox, oy = sites[j]
        a, b = ox - sx, oy - sy
        c = 0.5 * (ox * ox - sx * sx + oy * oy - sy * sy)
        cell = _clip_half_plane(cell, a, b, c)
        if len(cell) < 3:
            raise MeshError(f"voronoi cell of site {i} collapsed")
        r_max_sq = max((px - sx) ** 2 + (py - sy) ** 2 for px, py in cell)
    return cell


def _polygon_centroid(cell: list[tuple[float, float]]) -> tuple[float, float]:
    area2 = 0.0
    cx = cy = 0.0
    n = len(cell)
    for i in range(n):
        px, py = cell[i]
        qx, qy = cell[(i + 1) % n]
        w = px * qy - qx * py
        area2 += w
        cx += (px + qx) * w
        cy += (py + qy) * w
    return cx / (3.0 * area2), cy / (3.0 * area2)


def cvt_energy(sites: np.ndarray, cells: list[list[tuple[float, float]]]) -> float:
    """Quantization energy sum_i integral over cell_i of |x - site_i|^2.

    Each convex cell is fanned into triangles; the integrand is quadratic, so
    the edge-midpoint rule on each triangle is exact.
    """
    total = 0.0
    for s, cell in zip(sites, cells):
        p0 = np.asarray(cell[0])
        for a, b in zip(cell[1:-1], cell[2:]):
            pa, pb = np.asarray(a), np.asarray(b)
            area = 0.5 * abs(
                (pa[0] - p0[0]) * (pb[1] - p0[1]) - (pa[1] - p0[1]) * (pb[0] - p0[0])
            )
            mids = [(p0 + pa) / 2, (pa + pb) / 2, (pb + p0) / 2]
            total += area / 3.0 * sum(float(((m - s) ** 2).sum()) for m in mids)
    return total


def _lloyd_cells(sites: np.ndarray) -> list[list[tuple[float, float]]]:
    n = len(sites)
    if n == 1:
        return [[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]]
    diff = sites[:, None, :] - sites[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    k = min(n - 1, 48)
    nearest = np.argpartition(dist, k - 1, axis=1)[:, :k]
    cells = []
    for i in range(n):
        order = nearest[i][np.argsort(dist[i, nearest[i]], kind="stable")]
        cell = _voronoi_cell(i, sites, order, dist[i])
        # The k nearest neighbours normally suffice; fall back to the full
        # sorted list when the early-exit bound was not reached.
        if k < n - 1:
            r_max_sq = max(
                (px - sites[i, 0]) ** 2 + (py - sites[i, 1]) ** 2 for px, py in cell
            )
            if dist[i, order[-1]] ** 2 <= 4.0 * r_max_sq:
                full = np.argsort(dist[i], kind="stable")[: n - 1]
                cell = _voronoi_cell(i, sites, full, dist[i])
        cells.append(cell)
    return cells


def lloyd_step(sites: np.ndarray) -> tuple[np.ndarray, list[list[tuple[float, float]]]]:
    """One Lloyd iteration: clip Voronoi cells to the unit square and move
    each site to its cell centroid. Returns (new sites, cells of old sites)."""
    cells = _lloyd_cells(sites)
    new_sites = np.array([_polygon_centroid(c) for c in cells])
    return new_sites, cells


def _weld_mesh(cells_xy: list[list[tuple[float, float]]],
               domain=(0.0, 0.0, 1.0, 1.0), eps: float = 1e-9) -> PolyMesh:
    """Merge per-cell vertex coordinates into a shared vertex list using a
    spatial hash, so conforming cells share vertex ids exactly."""
    grid: dict[tuple[int, int], list[int]] = {}
    verts: list[tuple[float, float]] = []

    def vid(p: tuple[float, float]) -> int:
        gx, gy = int(math.floor(p[0] / eps)), int(math.floor(p[1] / eps))
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for i in grid.get((gx + dx, gy + dy), ()):
                    if abs(verts[i][0] - p[0]) <= eps and abs(verts[i][1] - p[1]) <= eps:
                        return i
        verts.append(p)
        grid.setdefault((gx, gy), []).append(len(verts) - 1)
        return len(verts) - 1

    cells = []
    for cell in cells_xy:
        ids = [vid(p) for p in cell]
        dedup = [i for n, i in enumerate(ids) if i != ids[(n - 1) % len(ids)]]
        cells.append(dedup)
    return PolyMesh(vertices=np.asarray(verts), cells=cells, domain=domain)


def cvt_mesh(n_cells: int, rng: RngStream | None = None, *,
             sites: Sequence[Sequence[float]] | None = None,
             max_iter: int = 200, tol: float = 1e-6) -> PolyMesh:
    """Centroidal Voronoi tessellation of the unit square by Lloyd iteration.

    Sites start at ``sites`` if given, else at ``n_cells`` uniform samples
    from ``rng``. Iteration stops when the largest site movement drops below
    ``tol`` times the characteristic size sqrt(1 / n_cells), or after
    ``max_iter`` rounds.
    """
    if n_cells < 1:
        raise ValueError("need at least one cell")
    if sites is not None:
        pts = np.asarray(sites, dtype=float)
        if pts.shape != (n_cells, 2):
            raise ValueError(f"expected {n_cells} sites, got {pts.shape}")
    else:
        if rng is None:
            raise ValueError("need either rng or explicit sites")
        pts = rng.uniform_points(n_cells)

    h = math.sqrt(1.0 / n_cells)
    for _ in range(max_iter):
        new_pts, _ = lloyd_step(pts)
        move = float(np.max(np.linalg.norm(new_pts - pts, axis=1)))
        pts = new_pts
        if move < tol * h:
            break
    return _weld_mesh(_lloyd_cells(pts))


# -- short edge elimination -----------------------------------------------------

def _boundary_sides(p: np.ndarray, domain, tol: float) -> frozenset[int]:
    x0, y0, x1, y1 = domain
    sides = set()
    if abs(p[0] - x0) <= tol:
        sides.add(0)
    if abs(p[0] - x1) <= tol:
        sides.add(1)
    if abs(p[1] - y0) <= tol:
        sides.add(2)
    if abs(p[1] - y1) <= tol:
        sides.add(3)
    return frozenset(sides)


def _cell_convex_after(verts: np.ndarray, cycle: list[int], tol: float) -> bool:
    n = len(cycle)
    if n < 3:
        return False
    pts = verts[cycle]
    edges = np.roll(pts, -1, axis=0) - pts
    for i in range(n):
        j = (i + 1) % n
        cross = edges[i, 0] * edges[j, 1] - edges[i, 1] * edges[j, 0]
        if cross <= tol:
            return False
    return True


def eliminate_short_edges(mesh: PolyMesh, threshold_ratio: float = 0.15) -> PolyMesh:
    """Collapse every mesh edge shorter than ``threshold_ratio`` times the
    mesh size (largest cell diameter), shortest first, until none remains.

    A collapse removes one endpoint of the edge, rerouting all its cells
    through the surviving endpoint. The survivor is chosen so that every
    affected cell stays convex and the domain boundary stays straight; when
    both endpoints qualify the one with more incident cells survives, ties
    broken by lower vertex id. Edges whose collapse would break a cell are
    left in place and logged. The mesh size is recomputed after the edge set
    stabilizes, and collapsing resumes if the threshold moved, so applying
    the pass twice equals applying it once.
    """
    verts = [tuple(p) for p in mesh.vertices]
    cells = [list(c) for c in mesh.cells]
    domain = mesh.domain
    bnd_tol = 1e-9
    h = PolyMesh(np.asarray(verts), cells, domain).mesh_size()
    threshold = threshold_ratio * h

    def vertex_cells() -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for cid, cell in enumerate(cells):
            for u in cell:
                out.setdefault(u, []).append(cid)
        return out

    def try_collapse(dead: int, keep: int, incidence) -> list[list[int]] | None:
        """Cells rewritten with ``dead`` -> ``keep``, or None if invalid."""
        arr = np.asarray(verts)
        sides_dead = _boundary_sides(arr[dead], domain, bnd_tol)
        sides_keep = _boundary_sides(arr[keep], domain, bnd_tol)
        if not sides_dead <= sides_keep:
            return None
        new_cells = []
        conv_tol = 1e-10 * h * h
        for cid in incidence.get(dead, []):
            cycle = [keep if u == dead else u for u in cells[cid]]
            cycle = [u for n, u in enumerate(cycle) if u != cycle[(n - 1) % len(cycle)]]
            if len(cycle) < 3 or not _cell_convex_after(arr, cycle, conv_tol):
                return None
            new_cells.append((cid, cycle))
        return new_cells

    skipped: set[tuple[int, int]] = set()
    while True:
        incidence = vertex_cells()
        arr = np.asarray(verts)
        shortest: tuple[float, tuple[int, int]] | None = None
        for (u, v), _cids in sorted(PolyMesh(arr, cells, domain).edges().items()):
            length = float(np.linalg.norm(arr[u] - arr[v]))
            if length >= threshold or (u, v) in skipped:
                continue
            if shortest is None or length < shortest[0]:
                shortest = (length, (u, v))
        if shortest is None:
            new_threshold = threshold_ratio * PolyMesh(arr, cells, domain).mesh_size()
            if new_threshold <= threshold * (1.0 + 1e-12):
                break
            threshold = new_threshold
            skipped.clear()
            continue
        _, (u, v) = shortest

        options = []
        for dead, keep in ((u, v), (v, u)):
            rewritten = try_collapse(dead, keep, incidence)
            if rewritten is not None:
                options.append((len(incidence.get(keep, [])), -keep, dead, keep, rewritten))
        if not options:
            skipped.add((u, v))
            logger.warning("short edge (%d, %d) could not be collapsed", u, v)
            continue
        options.sort(reverse=True)
        _, _, dead, keep, rewritten = options[0]
        for cid, cycle in rewritten:
            cells[cid] = cycle
        # A collapse changes neighbouring cells, so previously stuck edges
        # deserve another look; bounded because each collapse removes a vertex.
        skipped.clear()

    # Compact the vertex array to the vertices still referenced.
    used = sorted({u for cell in cells for u in cell})
    remap = {old: new for new, old in enumerate(used)}
    out = PolyMesh(
        vertices=np.asarray([verts[u] for u in used]),
        cells=[[remap[u] for u in cell] for cell in cells],
        domain=domain,
    )
    return out


# -- statistics -----------------------------------------------------------------

def mesh_stats(mesh: PolyMesh, thresholds=None):
    """Per-cell shape reports plus the h_star/h_K and n-gon histograms.

    Returns (reports, ratio_histogram, ngon_counts) where the ratio histogram
    uses 20 fixed bins on [0, 1].
    """
    reports = []
    for c in range(len(mesh.cells)):
        reports.append(shape_report(mesh.cell_polygon(c), thresholds))
    ratios = np.array([r.h_star_ratio for r in reports])
    hist, edges = np.histogram(ratios, bins=np.linspace(0.0, 1.0, 21))
    ngons: dict[int, int] = {}
    for r in reports:
        ngons[r.n_vertices] = ngons.get(r.n_vertices, 0) + 1
    return reports, (hist.tolist(), edges.tolist()), dict(sorted(ngons.items()))
