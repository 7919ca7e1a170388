"""Wachspress barycentric coordinates on simple convex polytopes:
evaluation, exact high-order derivatives, certified derivative bounds,
polygon generators, and the 2D derivative-scaling experiments."""

from .coords import BoundBreakdown, BoundTerm, WachspressBasis
from .polygen import (
    AllCollinearError,
    MeshError,
    PolyMesh,
    RngStream,
    convex_hull_2d,
    cvt_mesh,
    eliminate_short_edges,
    family_k,
    mesh_stats,
    random_convex_polygon,
    scale_polygon,
)
from .polytope import (
    DegenerateError,
    DuplicateVertexError,
    Facet,
    GeometryError,
    NonConvexError,
    Polytope,
    ShapeReport,
    Thresholds,
    UnsupportedDimensionError,
    build_from_vertices_2d,
    build_general,
    load_polytope,
    polytope_from_json,
    shape_report,
)

__version__ = "0.1.0"

__all__ = [
    "AllCollinearError",
    "BoundBreakdown",
    "BoundTerm",
    "DegenerateError",
    "DuplicateVertexError",
    "Facet",
    "GeometryError",
    "MeshError",
    "NonConvexError",
    "PolyMesh",
    "Polytope",
    "RngStream",
    "ShapeReport",
    "Thresholds",
    "UnsupportedDimensionError",
    "WachspressBasis",
    "build_from_vertices_2d",
    "build_general",
    "convex_hull_2d",
    "cvt_mesh",
    "eliminate_short_edges",
    "family_k",
    "load_polytope",
    "mesh_stats",
    "polytope_from_json",
    "random_convex_polygon",
    "scale_polygon",
    "shape_report",
]
