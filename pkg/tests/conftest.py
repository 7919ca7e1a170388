"""Shared fixtures and corpus builders."""
from __future__ import annotations

import numpy as np
import pytest

from wachspress import RngStream, build_from_vertices_2d, random_convex_polygon, scale_polygon

SQUARE = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
TRIANGLE = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]


@pytest.fixture
def square():
    return build_from_vertices_2d(SQUARE)


@pytest.fixture
def triangle():
    return build_from_vertices_2d(TRIANGLE)


def polygon_corpus(seed: int, count: int, *, min_ratio: float = 0.01,
                   h_k: float | None = None, n_points: int = 20):
    """Deterministic corpus of random convex polygons filtered by
    h_star/h_K >= min_ratio, optionally rescaled to diameter h_k.

    Attempt i uses the sub-seed seed XOR i, so the stream is reproducible
    regardless of how many rejections occur before each acceptance.
    """
    polys = []
    attempt = 0
    base = RngStream(seed)
    while len(polys) < count:
        poly = random_convex_polygon(base.spawn(attempt), n_points)
        attempt += 1
        if poly.h_star() / poly.diameter() < min_ratio:
            continue
        if h_k is not None:
            poly = scale_polygon(poly, h_k)
        polys.append(poly)
    return polys


def interior_points(poly, rng: np.random.Generator, count: int) -> np.ndarray:
    """Random interior points as convex combinations of fan triangles."""
    v = poly.vertices
    c = v.mean(axis=0)
    n = len(v)
    out = np.empty((count, 2))
    for k in range(count):
        i = int(rng.integers(n))
        j = (i + 1) % n
        r1, r2 = rng.random(), rng.random()
        if r1 + r2 > 1.0:
            r1, r2 = 1.0 - r1, 1.0 - r2
        out[k] = c + r1 * (v[i] - c) + r2 * (v[j] - c)
    return out


def boundary_points(poly, rng: np.random.Generator, count: int) -> np.ndarray:
    """Random points on polygon edges, including a couple of vertices."""
    v = poly.vertices
    n = len(v)
    out = []
    n_vertex_samples = min(2, count)
    for k in range(n_vertex_samples):
        out.append(v[int(rng.integers(n))])
    for _ in range(count - n_vertex_samples):
        i = int(rng.integers(n))
        t = 0.1 + 0.8 * rng.random()
        out.append(v[i] + t * (v[(i + 1) % n] - v[i]))
    return np.asarray(out)
