"""Simple convex polytopes: construction, validation, and shape metrics.

A polytope is stored in half-space form alongside its vertices: each facet
carries a unit outward normal ``n_f`` and an offset ``c_f`` so that the
distance from a point ``x`` to the facet hyperplane is ``h_f(x) = c_f - n_f.x``
(non-negative inside). Every vertex records its ``d`` incident facets, ordered
so the matrix of their normals has positive determinant.

Only polygons (d = 2) can be built from a bare vertex list; higher-dimensional
polytopes must supply facets and incidence explicitly. Inradius, enclosing
circle, width, and interior angles are implemented for d = 2.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from itertools import combinations
from typing import Sequence

import numpy as np


class GeometryError(Exception):
    """Base class for invalid-geometry conditions."""


class NonConvexError(GeometryError):
    pass


class DegenerateError(GeometryError):
    """Adjacent facets lie in the same hyperplane (collinear vertices in 2D)."""


class DuplicateVertexError(GeometryError):
    pass


class UnsupportedDimensionError(GeometryError):
    pass


# Dimensionless sine threshold below which consecutive edges count as collinear.
COLLINEAR_SIN_TOL = 1e-12
# Relative (to the diameter) tolerance for "point lies on a facet" tests.
ON_FACE_REL_TOL = 1e-9


@dataclass(frozen=True)
class Facet:
    """One facet: unit outward normal, offset, and incident vertex ids."""

    normal: np.ndarray
    offset: float
    vertices: tuple[int, ...]

    def height(self, x: np.ndarray) -> float:
        """Distance from x to the facet hyperplane (negative outside)."""
        return self.offset - float(self.normal @ np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Polytope:
    """A simple, non-degenerate, convex polytope.

    Immutable after construction; all queries are read-only.
    """

    dim: int
    vertices: np.ndarray                      # (n_vertices, dim)
    facets: tuple[Facet, ...]
    vertex_facets: tuple[tuple[int, ...], ...]  # per vertex, dim facet ids, det > 0 order

    def __post_init__(self) -> None:
        self.vertices.setflags(write=False)
        for f in self.facets:
            f.normal.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    def h_f_at(self, f: int, x: Sequence[float]) -> float:
        """Distance from x to facet f's hyperplane: c_f - n_f . x."""
        return self.facets[f].height(np.asarray(x, dtype=float))

    def heights(self, x: Sequence[float]) -> np.ndarray:
        """Vector of h_f(x) over all facets."""
        x = np.asarray(x, dtype=float)
        normals = np.stack([f.normal for f in self.facets])
        offsets = np.array([f.offset for f in self.facets])
        return offsets - normals @ x

    def contains(self, x: Sequence[float], tol: float | None = None) -> bool:
        """True if x lies in the closed polytope, within a scale-aware slack."""
        if tol is None:
            tol = ON_FACE_REL_TOL * self.diameter()
        return bool(np.all(self.heights(x) >= -tol))

    def diameter(self) -> float:
        """Largest pairwise vertex distance h_K."""
        v = self.vertices
        diff = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((diff ** 2).sum(axis=2).max()))

    def h_star(self) -> float:
        """Minimum distance between non-incident vertex/facet pairs."""
        best = math.inf
        for f in self.facets:
            mask = np.ones(self.n_vertices, dtype=bool)
            mask[list(f.vertices)] = False
            if not mask.any():
                continue
            h = f.offset - self.vertices[mask] @ f.normal
            best = min(best, float(h.min()))
        return best

    def centroid(self) -> np.ndarray:
        """Arithmetic mean of the vertices."""
        return self.vertices.mean(axis=0)

    def normal_matrix(self, v: int) -> np.ndarray:
        """M_v: the d x d matrix whose columns are the incident facet normals,
        in the stored (positive-determinant) order."""
        return np.column_stack([self.facets[f].normal for f in self.vertex_facets[v]])

    def det_m(self, v: int) -> float:
        return float(np.linalg.det(self.normal_matrix(v)))

    # -- 2D-only metrics ---------------------------------------------------

    def _require_2d(self, what: str) -> None:
        if self.dim != 2:
            raise UnsupportedDimensionError(f"{what} is implemented for d = 2 only")

    def edge_lengths(self) -> np.ndarray:
        """Lengths of the polygon edges (d = 2, CCW vertex order)."""
        self._require_2d("edge_lengths")
        v = self.vertices
        return np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)

    def min_edge(self) -> float:
        return float(self.edge_lengths().min())

    def interior_angles(self) -> np.ndarray:
        """Interior angle at each vertex, each in (0, pi); they sum to
        (n - 2) * pi for a convex polygon."""
        self._require_2d("interior_angles")
        v = self.vertices
        prev = np.roll(v, 1, axis=0) - v
        nxt = np.roll(v, -1, axis=0) - v
        dots = (prev * nxt).sum(axis=1)
        crosses = prev[:, 0] * nxt[:, 1] - prev[:, 1] * nxt[:, 0]
        return np.abs(np.arctan2(crosses, dots))

    def inradius(self) -> tuple[float, np.ndarray]:
        """Radius and center of the largest inscribed circle (Chebyshev
        center), found exactly by enumerating facet triples as active sets."""
        self._require_2d("inradius")
        normals = np.stack([f.normal for f in self.facets])
        offsets = np.array([f.offset for f in self.facets])
        feas_tol = ON_FACE_REL_TOL * self.diameter()
        best_r, best_c = -math.inf, None
        for i, j, k in combinations(range(self.n_facets), 3):
            a = np.array([
                [normals[i, 0], normals[i, 1], 1.0],
                [normals[j, 0], normals[j, 1], 1.0],
                [normals[k, 0], normals[k, 1], 1.0],
            ])
            b = offsets[[i, j, k]]
            try:
                sol = np.linalg.solve(a, b)
            except np.linalg.LinAlgError:
                continue
            c, r = sol[:2], sol[2]
            if r <= best_r:
                continue
            if np.all(offsets - normals @ c >= r - feas_tol):
                best_r, best_c = r, c
        if best_c is None:
            raise GeometryError("no feasible inscribed circle found")
        return best_r, best_c

    def circumradius(self) -> tuple[float, np.ndarray]:
        """Radius and center of the smallest enclosing circle of the vertex
        set, by exhaustive search over vertex pairs and triples."""
        self._require_2d("circumradius")
        v = self.vertices
        tol = 1e-12 * self.diameter()

        def covers(c: np.ndarray, r: float) -> bool:
            return bool(np.all(np.linalg.norm(v - c, axis=1) <= r + tol))

        best_r, best_c = math.inf, None
        for i, j in combinations(range(len(v)), 2):
            c = 0.5 * (v[i] + v[j])
            r = 0.5 * float(np.linalg.norm(v[i] - v[j]))
            if r < best_r and covers(c, r):
                best_r, best_c = r, c
        for i, j, k in combinations(range(len(v)), 3):
            c = _circumcenter(v[i], v[j], v[k])
            if c is None:
                continue
            r = float(np.linalg.norm(v[i] - c))
            if r < best_r and covers(c, r):
                best_r, best_c = r, c
        if best_c is None:
            raise GeometryError("no enclosing circle found")
        return best_r, best_c

    def width(self) -> float:
        """Minimum distance between two parallel supporting lines. For a
        convex polygon one of the two lines is flush with an edge, so this is
        the minimum over facets of the farthest vertex distance."""
        self._require_2d("width")
        best = math.inf
        for f in self.facets:
            h = f.offset - self.vertices @ f.normal
            best = min(best, float(h.max()))
        return best

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        if self.dim == 2:
            return {"d": 2, "vertices": self.vertices.tolist()}
        return {
            "d": self.dim,
            "vertices": self.vertices.tolist(),
            "facets": [
                {
                    "normal": f.normal.tolist(),
                    "offset": f.offset,
                    "vertices": list(f.vertices),
                }
                for f in self.facets
            ],
        }


def _circumcenter(p: np.ndarray, q: np.ndarray, r: np.ndarray) -> np.ndarray | None:
    d = 2.0 * (p[0] * (q[1] - r[1]) + q[0] * (r[1] - p[1]) + r[0] * (p[1] - q[1]))
    if d == 0.0:
        return None
    p2, q2, r2 = (p ** 2).sum(), (q ** 2).sum(), (r ** 2).sum()
    ux = (p2 * (q[1] - r[1]) + q2 * (r[1] - p[1]) + r2 * (p[1] - q[1])) / d
    uy = (p2 * (r[0] - q[0]) + q2 * (p[0] - r[0]) + r2 * (q[0] - p[0])) / d
    return np.array([ux, uy])


def build_from_vertices_2d(points: Sequence[Sequence[float]],
                           tol: float | None = None) -> Polytope:
    """Build a convex polygon from a bare vertex list.

    Points are sorted counter-clockwise around their centroid; consecutive
    edges become facets with outward unit normals. Raises
    ``DuplicateVertexError``, ``DegenerateError`` (three consecutive collinear
    vertices), or ``NonConvexError``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("expected an (n, 2) array of points")
    n = len(pts)
    if n < 3:
        raise ValueError("a polygon needs at least 3 vertices")

    scale = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    dup_tol = (ON_FACE_REL_TOL if tol is None else tol) * max(scale, 1e-300)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    iu = np.triu_indices(n, k=1)
    if np.any(dist[iu] <= dup_tol):
        raise DuplicateVertexError("two input vertices coincide")

    center = pts.mean(axis=0)
    angles = np.arctan2(pts[:, 1] - center[1], pts[:, 0] - center[0])
    order = np.argsort(angles, kind="stable")
    pts = pts[order]

    edges = np.roll(pts, -1, axis=0) - pts
    lengths = np.linalg.norm(edges, axis=1)
    for i in range(n):
        j = (i + 1) % n
        cross = edges[i, 0] * edges[j, 1] - edges[i, 1] * edges[j, 0]
        sin_turn = cross / (lengths[i] * lengths[j])
        if abs(sin_turn) <= COLLINEAR_SIN_TOL:
            raise DegenerateError(
                f"vertices {i}, {j}, {(j + 1) % n} are collinear"
            )
        if sin_turn < 0.0:
            raise NonConvexError(f"reflex turn at vertex {j}")

    facets = []
    for i in range(n):
        j = (i + 1) % n
        e = edges[i] / lengths[i]
        normal = np.array([e[1], -e[0]])  # outward for CCW orientation
        offset = float(normal @ pts[i])
        facets.append(Facet(normal=normal, offset=offset, vertices=(i, j)))

    vertex_facets = []
    for i in range(n):
        prev_f, next_f = (i - 1) % n, i
        m = np.column_stack([facets[prev_f].normal, facets[next_f].normal])
        if np.linalg.det(m) <= 0.0:
            prev_f, next_f = next_f, prev_f
        vertex_facets.append((prev_f, next_f))

    poly = Polytope(
        dim=2,
        vertices=pts,
        facets=tuple(facets),
        vertex_facets=tuple(vertex_facets),
    )
    _validate(poly, tol)
    return poly


def build_general(dim: int,
                  vertices: Sequence[Sequence[float]],
                  facet_specs: Sequence[dict],
                  tol: float | None = None) -> Polytope:
    """Build a polytope of any dimension from explicit facet data.

    Each facet spec is ``{"normal": [...], "offset": c, "vertices": [ids]}``.
    Incidence is taken from the facet vertex lists; per-vertex facet order is
    chosen so the normal matrix has positive determinant.
    """
    pts = np.asarray(vertices, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ValueError(f"expected an (n, {dim}) vertex array")
    facets = []
    for spec in facet_specs:
        normal = np.asarray(spec["normal"], dtype=float)
        norm = float(np.linalg.norm(normal))
        if abs(norm - 1.0) > 1e-12:
            normal = normal / norm
        facets.append(Facet(normal=normal, offset=float(spec["offset"]),
                            vertices=tuple(int(i) for i in spec["vertices"])))

    incident: list[list[int]] = [[] for _ in range(len(pts))]
    for fid, f in enumerate(facets):
        for v in f.vertices:
            incident[v].append(fid)

    vertex_facets = []
    for v, fids in enumerate(incident):
        if len(fids) != dim:
            raise NonConvexError(
                f"vertex {v} is incident to {len(fids)} facets, expected {dim} "
                "(polytope is not simple)"
            )
        m = np.column_stack([facets[f].normal for f in fids])
        det = np.linalg.det(m)
        if det < 0.0:
            fids = [fids[1], fids[0]] + fids[2:]
            det = -det
        if det <= 0.0 or not np.isfinite(det):
            raise DegenerateError(f"facet normals at vertex {v} are dependent")
        vertex_facets.append(tuple(fids))

    poly = Polytope(dim=dim, vertices=pts, facets=tuple(facets),
                    vertex_facets=tuple(vertex_facets))
    _validate(poly, tol)
    return poly


def _validate(poly: Polytope, tol: float | None = None) -> None:
    """Check all structural invariants; raise a GeometryError on failure."""
    h_k = poly.diameter()
    face_tol = (ON_FACE_REL_TOL if tol is None else tol) * h_k
    for fid, f in enumerate(poly.facets):
        if abs(float(np.linalg.norm(f.normal)) - 1.0) > 1e-12:
            raise GeometryError(f"facet {fid} normal is not unit length")
        h = f.offset - poly.vertices @ f.normal
        incident = np.zeros(poly.n_vertices, dtype=bool)
        incident[list(f.vertices)] = True
        if np.any(np.abs(h[incident]) > face_tol):
            raise GeometryError(f"facet {fid} does not pass through its vertices")
        if np.any(h[~incident] <= face_tol):
            raise NonConvexError(
                f"facet {fid} has a non-incident vertex on or behind it"
            )
    for v, fids in enumerate(poly.vertex_facets):
        if len(fids) != poly.dim:
            raise NonConvexError(f"vertex {v} is not simple")
        if poly.det_m(v) <= 0.0:
            raise DegenerateError(f"normal matrix at vertex {v} has det <= 0")


# -- shape report ----------------------------------------------------------

@dataclass(frozen=True)
class Thresholds:
    """Numeric thresholds for the shape-regularity verdicts H1-H7.

    The conditions are asymptotic-family assumptions; no canonical constants
    exist, so these defaults mirror the regime of the scaling experiments and
    are fully overridable.
    """

    c_star: float = 0.01        # H1: h_star >= c_star * h_K
    d_star: float = 0.15        # H2: min edge >= d_star * h_K
    max_vertices: int = 10      # H3
    max_facets: int = 10        # H4
    c_width: float = 0.1        # H5: width >= c_width * h_K
    max_angle: float = 0.95 * math.pi   # H6
    min_angle: float = 0.05 * math.pi   # H7

    @classmethod
    def from_json(cls, obj: dict) -> "Thresholds":
        known = {f.name for f in fields(cls)}
        bad = set(obj) - known
        if bad:
            raise ValueError(f"unknown threshold fields: {sorted(bad)}")
        return cls(**obj)


@dataclass(frozen=True)
class ShapeReport:
    """All shape metrics of one polygon plus the H1-H7 verdicts."""

    h_k: float
    h_star: float
    rho: float
    big_r: float
    width: float
    min_edge: float
    n_vertices: int
    n_facets: int
    min_angle: float
    max_angle: float
    h1: bool
    h2: bool
    h3: bool
    h4: bool
    h5: bool
    h6: bool
    h7: bool

    @property
    def h_star_ratio(self) -> float:
        return self.h_star / self.h_k

    @property
    def min_edge_ratio(self) -> float:
        return self.min_edge / self.h_k

    @property
    def width_ratio(self) -> float:
        return self.width / self.h_k

    @property
    def chunkiness(self) -> float:
        return self.h_k / self.rho

    CSV_COLUMNS = (
        "n_vertices", "n_facets", "h_K", "h_star", "rho", "R", "width",
        "min_edge", "min_angle", "max_angle", "h_star_ratio", "min_edge_ratio",
        "width_ratio", "chunkiness", "H1", "H2", "H3", "H4", "H5", "H6", "H7",
    )

    def csv_row(self) -> list:
        return [
            self.n_vertices, self.n_facets, repr(self.h_k), repr(self.h_star),
            repr(self.rho), repr(self.big_r), repr(self.width),
            repr(self.min_edge), repr(self.min_angle), repr(self.max_angle),
            repr(self.h_star_ratio), repr(self.min_edge_ratio),
            repr(self.width_ratio), repr(self.chunkiness),
            int(self.h1), int(self.h2), int(self.h3), int(self.h4),
            int(self.h5), int(self.h6), int(self.h7),
        ]

    def to_json(self) -> dict:
        return {
            "h_K": self.h_k, "h_star": self.h_star, "rho": self.rho,
            "R": self.big_r, "width": self.width, "min_edge": self.min_edge,
            "n_vertices": self.n_vertices, "n_facets": self.n_facets,
            "min_angle": self.min_angle, "max_angle": self.max_angle,
            "ratios": {
                "h_star/h_K": self.h_star_ratio,
                "min_edge/h_K": self.min_edge_ratio,
                "width/h_K": self.width_ratio,
                "h_K/rho": self.chunkiness,
            },
            "verdicts": {
                "H1": self.h1, "H2": self.h2, "H3": self.h3, "H4": self.h4,
                "H5": self.h5, "H6": self.h6, "H7": self.h7,
            },
        }


def shape_report(poly: Polytope, thresholds: Thresholds | None = None) -> ShapeReport:
    """Compute every shape metric and the H1-H7 verdicts for a polygon."""
    poly._require_2d("shape_report")
    t = thresholds or Thresholds()
    h_k = poly.diameter()
    h_star = poly.h_star()
    rho, _ = poly.inradius()
    big_r, _ = poly.circumradius()
    width = poly.width()
    min_edge = poly.min_edge()
    angles = poly.interior_angles()
    return ShapeReport(
        h_k=h_k, h_star=h_star, rho=rho, big_r=big_r, width=width,
        min_edge=min_edge, n_vertices=poly.n_vertices, n_facets=poly.n_facets,
        min_angle=float(angles.min()), max_angle=float(angles.max()),
        h1=h_star >= t.c_star * h_k,
        h2=min_edge >= t.d_star * h_k,
        h3=poly.n_vertices <= t.max_vertices,
        h4=poly.n_facets <= t.max_facets,
        h5=width >= t.c_width * h_k,
        h6=float(angles.max()) <= t.max_angle,
        h7=float(angles.min()) >= t.min_angle,
    )


# -- JSON I/O ----------------------------------------------------------------

def polytope_from_json(obj: dict, tol: float | None = None) -> Polytope:
    """Parse the polygon / general-polytope JSON formats."""
    d = int(obj["d"])
    if d == 2 and "facets" not in obj:
        return build_from_vertices_2d(obj["vertices"], tol)
    return build_general(d, obj["vertices"], obj["facets"], tol)


def load_polytope(path: str, tol: float | None = None) -> Polytope:
    with open(path) as fh:
        return polytope_from_json(json.load(fh), tol)
