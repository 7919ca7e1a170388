"""Derivative-scaling studies on random and degenerating polygons.

Three experiment drivers measure the polygon-wide derivative magnitude

    Lambda_alpha = max over x in K of sum over v of |D^alpha phi_v(x)|

over dense sample grids and relate it to the polygon diameter h_K, the vertex
count, and the vertex-to-facet distance h_star:

* ``run_scaling_vs_hk``  — random polygons with diameters spread log-uniformly
  over several decades; Lambda against h_K follows a power law of exponent
  -|alpha|;
* ``run_scaling_vs_n``   — unit-diameter random polygons grouped by vertex
  count;
* ``run_degeneration``   — the K1/K2/K3 hexagon families whose short edge
  collapses, including per-vertex and short-edge-tangential studies.

Everything is deterministic given (config, seed): polygons draw their points
from per-attempt sub-seeds, records are emitted in id order, and CSV floats
are written with shortest round-trip formatting, so repeated runs are
byte-identical.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from . import multiindex as mi
from .coords import WachspressBasis
from .multiindex import MultiIndex
from .polygen import (
    _FAMILY_TEMPLATES,
    RngStream,
    family_k,
    random_convex_polygon,
    scale_polygon,
)
from .polytope import GeometryError, Polytope

#: every multi-index with 1 <= |alpha| <= 3, in graded-lex order
DEFAULT_ALPHAS: tuple[MultiIndex, ...] = tuple(
    a for a in mi.graded_indices(2, 3) if 1 <= mi.order(a)
)


# -- sampling ------------------------------------------------------------------

@dataclass(frozen=True)
class SampleGrid:
    """Dense deterministic sample of a closed polygon.

    The polygon is fanned into triangles from the vertex centroid; each
    triangle carries the barycentric lattice of density m, which includes the
    polygon vertices and m points per edge, so the boundary is sampled too.
    """

    polygon: Polytope
    density: int
    points: np.ndarray  # (N, 2)


def sample_grid(poly: Polytope, density: int) -> SampleGrid:
    if density < 1:
        raise ValueError("density must be >= 1")
    v = poly.vertices
    c = v.mean(axis=0)
    m = density
    seen: set[bytes] = set()
    pts: list[np.ndarray] = []
    for k in range(len(v)):
        a, b = v[k], v[(k + 1) % len(v)]
        for i in range(m + 1):
            for j in range(m + 1 - i):
                p = (i * c + j * a + (m - i - j) * b) / m
                key = p.tobytes()
                if key not in seen:
                    seen.add(key)
                    pts.append(p)
    return SampleGrid(polygon=poly, density=density, points=np.asarray(pts))


def lambda_over_grid(basis: WachspressBasis, alpha: MultiIndex,
                     density: int = 40) -> tuple[float, np.ndarray, np.ndarray]:
    """(Lambda_alpha, argmax point, per-vertex max |D^alpha phi_v|) over the
    sample grid. Monotone non-decreasing under grid refinement (density to a
    multiple of itself), since refined lattices contain coarser ones."""
    grid = sample_grid(basis.polytope, density)
    table = basis.d_phi_table([mi.as_multi_index(alpha)], grid.points)[0]
    sums = np.abs(table).sum(axis=0)
    imax = int(np.argmax(sums))
    return float(sums[imax]), grid.points[imax], np.abs(table).max(axis=1)


# -- records -------------------------------------------------------------------

@dataclass(frozen=True)
class ScalingRecord:
    """One (polygon, alpha) measurement."""

    polygon_id: int
    seed: int
    n_vertices: int
    h_k: float
    h_star: float
    alpha: MultiIndex
    lam: float
    certified_bound: float
    argmax: tuple[float, float]
    per_vertex_max: tuple[float, ...]

    CSV_COLUMNS = (
        "polygon_id", "seed", "n_vertices", "h_K", "h_star", "alpha_x",
        "alpha_y", "lambda", "certified_bound", "argmax_x", "argmax_y",
        "per_vertex_max",
    )

    def csv_row(self) -> list:
        return [
            self.polygon_id, self.seed, self.n_vertices, repr(float(self.h_k)),
            repr(float(self.h_star)), self.alpha[0], self.alpha[1],
            repr(float(self.lam)), repr(float(self.certified_bound)),
            repr(float(self.argmax[0])), repr(float(self.argmax[1])),
            ";".join(repr(float(x)) for x in self.per_vertex_max),
        ]


@dataclass(frozen=True)
class DegenerationRecord:
    """One (family polygon, alpha) measurement of the short-edge study.

    Per-vertex values are listed in the family's canonical vertex order, so
    entries 0 and 1 are always the endpoints of the degenerating edge and the
    series stay aligned as ``a`` sweeps.
    """

    family: int
    a: float
    h_k: float
    h_star: float
    alpha: MultiIndex
    lam: float
    per_vertex_max: tuple[float, ...]
    tangential_max: tuple[float, ...] | None  # order |alpha|, along short edge

    CSV_COLUMNS = (
        "family", "a", "h_K", "h_star", "alpha_x", "alpha_y", "lambda",
        "per_vertex_max", "tangential_max",
    )

    def csv_row(self) -> list:
        return [
            self.family, repr(float(self.a)), repr(float(self.h_k)),
            repr(float(self.h_star)),
            self.alpha[0], self.alpha[1], repr(float(self.lam)),
            ";".join(repr(float(x)) for x in self.per_vertex_max),
            "" if self.tangential_max is None else
            ";".join(repr(float(x)) for x in self.tangential_max),
        ]


# -- configs -------------------------------------------------------------------

def _config_from_json(cls, obj: dict):
    known = {f.name for f in fields(cls)}
    bad = set(obj) - known
    if bad:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(bad)}")
    if "alphas" in obj:
        obj = dict(obj)
        obj["alphas"] = tuple(mi.as_multi_index(a) for a in obj["alphas"])
    return cls(**obj)


@dataclass(frozen=True)
class VsHkConfig:
    count: int = 100
    hk_min: float = 1e-5
    hk_max: float = 1.0
    min_hstar_ratio: float = 0.01
    alphas: tuple[MultiIndex, ...] = DEFAULT_ALPHAS
    density: int = 40
    seed: int = 0
    n_points: int = 20

    from_json = classmethod(_config_from_json)


@dataclass(frozen=True)
class VsNConfig:
    count: int = 100
    h_k: float = 1.0
    min_hstar_ratio: float = 0.01
    max_vertices: int = 10
    alphas: tuple[MultiIndex, ...] = DEFAULT_ALPHAS
    density: int = 40
    seed: int = 0
    # Hull sizes of a fixed-count sample concentrate narrowly, so the point
    # count is drawn per polygon to populate every vertex-count bucket.
    n_points_options: tuple[int, ...] = (4, 5, 6, 8, 10, 14, 20)

    from_json = classmethod(_config_from_json)


@dataclass(frozen=True)
class DegenerationConfig:
    family: int = 3
    a_start: float = 0.4
    a_steps: int = 13
    a_factor: float = 0.5
    alphas: tuple[MultiIndex, ...] = DEFAULT_ALPHAS
    density: int = 40
    per_vertex: bool = True
    tangential: bool = False

    from_json = classmethod(_config_from_json)

    def a_values(self) -> list[float]:
        return [self.a_start * self.a_factor ** j for j in range(self.a_steps)]


# -- drivers -------------------------------------------------------------------

def _measure(basis: WachspressBasis, alphas: Sequence[MultiIndex],
             density: int):
    """Lambda, argmax, and per-vertex maxima for every alpha in one sweep."""
    grid = sample_grid(basis.polytope, density)
    table = basis.d_phi_table(list(alphas), grid.points)
    out = []
    for a in range(len(alphas)):
        sums = np.abs(table[a]).sum(axis=0)
        imax = int(np.argmax(sums))
        out.append((float(sums[imax]), grid.points[imax],
                    np.abs(table[a]).max(axis=1)))
    return out


def run_scaling_vs_hk(config: VsHkConfig = VsHkConfig()) -> list[ScalingRecord]:
    """Random polygons with log-uniform diameters; rejection keeps only
    h_star / h_K at or above the configured floor."""
    base = RngStream(config.seed)
    records: list[ScalingRecord] = []
    attempt = 0
    log_lo, log_hi = math.log(config.hk_min), math.log(config.hk_max)
    for pid in range(config.count):
        while True:
            sub_seed = config.seed ^ attempt
            rng = base.spawn(attempt)
            attempt += 1
            poly = random_convex_polygon(rng, config.n_points)
            if poly.h_star() / poly.diameter() >= config.min_hstar_ratio:
                break
        target = math.exp(log_lo + rng.uniform() * (log_hi - log_lo))
        poly = scale_polygon(poly, target)
        basis = WachspressBasis(poly)
        for alpha, (lam, argmax, per_vertex) in zip(
            config.alphas, _measure(basis, config.alphas, config.density)
        ):
            records.append(ScalingRecord(
                polygon_id=pid, seed=sub_seed, n_vertices=poly.n_vertices,
                h_k=basis.h_k, h_star=basis.h_star, alpha=alpha, lam=lam,
                certified_bound=basis.certified_dphi_bound(alpha).total,
                argmax=(float(argmax[0]), float(argmax[1])),
                per_vertex_max=tuple(float(x) for x in per_vertex),
            ))
    return records


def run_scaling_vs_n(config: VsNConfig = VsNConfig()) -> list[ScalingRecord]:
    """Unit-diameter random polygons with bounded vertex count; the point
    count per hull is drawn from ``n_points_options`` so every vertex count
    from triangle up to the cap actually occurs."""
    base = RngStream(config.seed)
    records: list[ScalingRecord] = []
    attempt = 0
    for pid in range(config.count):
        while True:
            sub_seed = config.seed ^ attempt
            rng = base.spawn(attempt)
            attempt += 1
            n_points = config.n_points_options[
                int(rng.uniform() * len(config.n_points_options))
            ]
            poly = random_convex_polygon(rng, n_points)
            if poly.n_vertices > config.max_vertices:
                continue
            if poly.h_star() / poly.diameter() >= config.min_hstar_ratio:
                break
        poly = scale_polygon(poly, config.h_k)
        basis = WachspressBasis(poly)
        for alpha, (lam, argmax, per_vertex) in zip(
            config.alphas, _measure(basis, config.alphas, config.density)
        ):
            records.append(ScalingRecord(
                polygon_id=pid, seed=sub_seed, n_vertices=poly.n_vertices,
                h_k=basis.h_k, h_star=basis.h_star, alpha=alpha, lam=lam,
                certified_bound=basis.certified_dphi_bound(alpha).total,
                argmax=(float(argmax[0]), float(argmax[1])),
                per_vertex_max=tuple(float(x) for x in per_vertex),
            ))
    return records


def _short_edge_patch(poly: Polytope, p0: np.ndarray, p1: np.ndarray,
                      h_star: float) -> np.ndarray:
    """Deterministic refinement cloud around a degenerating edge.

    Extrema of high-order derivatives concentrate within a distance of order
    h_star from the short edge, far below any practical uniform lattice
    spacing, so the sweep adds log-spaced offsets into the interior along the
    edge's inward normal.
    """
    e = p1 - p0
    length = float(np.linalg.norm(e))
    tangent = e / length
    inward = np.array([-tangent[1], tangent[0]])  # interior lies left (CCW)
    # Peaks sit within a couple of edge lengths of the edge, offset ~ h_star.
    ts = np.linspace(-2.5, 3.5, 61)
    ds = np.geomspace(max(h_star / 8.0, 1e-14), 0.5 * poly.diameter(), 48)
    base = p0[None, :] + ts[:, None] * e[None, :]
    pts = (base[:, None, :] + ds[None, :, None] * inward[None, None, :]).reshape(-1, 2)
    keep = [p for p in pts if poly.contains(p)]
    return np.asarray(keep)


def run_degeneration(config: DegenerationConfig = DegenerationConfig()) -> list[DegenerationRecord]:
    """Sweep one hexagon family toward its degenerate limit, recording
    Lambda, per-vertex maxima, and optionally the maxima of the directional
    derivative along the short edge.

    Vertices are tracked by the family's canonical order across the sweep
    (the builder re-sorts them), and the sample set is the fan lattice plus a
    refinement patch around the degenerating edge.
    """
    records: list[DegenerationRecord] = []
    for a in config.a_values():
        try:
            poly = family_k(config.family, a)
        except GeometryError:
            continue
        template = np.asarray(_FAMILY_TEMPLATES[config.family](a))
        ids = []
        for tv in template:
            match = np.where((poly.vertices == tv).all(axis=1))[0]
            ids.append(int(match[0]))
        basis = WachspressBasis(poly)

        pts = np.vstack([
            sample_grid(poly, config.density).points,
            _short_edge_patch(poly, template[0], template[1], basis.h_star),
        ])
        table = basis.d_phi_table(list(config.alphas), pts)

        tangential: dict[int, tuple[float, ...]] = {}
        if config.tangential:
            tau = (template[1] - template[0])
            tau = tau / np.linalg.norm(tau)
            for order in sorted({mi.order(al) for al in config.alphas}):
                m_alphas = [al for al in mi.graded_indices(2, order)
                            if mi.order(al) == order]
                m_table = basis.d_phi_table(m_alphas, pts)
                directional = np.zeros_like(m_table[0])
                for ai, al in enumerate(m_alphas):
                    coeff = math.factorial(order) / mi.factorial(al)
                    directional += coeff * float(np.prod(tau ** np.array(al))) * m_table[ai]
                dir_max = np.abs(directional).max(axis=1)
                tangential[order] = tuple(float(dir_max[i]) for i in ids)

        for ai, alpha in enumerate(config.alphas):
            sums = np.abs(table[ai]).sum(axis=0)
            per_vertex = np.abs(table[ai]).max(axis=1)
            records.append(DegenerationRecord(
                family=config.family, a=a, h_k=basis.h_k, h_star=basis.h_star,
                alpha=alpha, lam=float(sums.max()),
                per_vertex_max=tuple(float(per_vertex[i]) for i in ids)
                if config.per_vertex else (),
                tangential_max=tangential.get(mi.order(alpha))
                if config.tangential else None,
            ))
    return records


# -- fits ------------------------------------------------------------------------

def fit_loglog(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares line through (log x, log y): (slope, intercept, R^2)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) < 2 or len(xs) != len(ys):
        raise ValueError("need at least two (x, y) pairs")
    if np.any(xs <= 0.0) or np.any(ys <= 0.0):
        raise ValueError("log-log fit requires positive data")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman rank correlation (average ranks on ties)."""

    def ranks(vals):
        order = np.argsort(vals, kind="stable")
        r = np.empty(len(vals))
        sorted_vals = np.asarray(vals)[order]
        i = 0
        while i < len(vals):
            j = i
            while j + 1 < len(vals) and sorted_vals[j + 1] == sorted_vals[i]:
                j += 1
            r[order[i:j + 1]] = 0.5 * (i + j) + 1.0
            i = j + 1
        return r

    rx, ry = ranks(list(xs)), ranks(list(ys))
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float((rx ** 2).sum()) * float((ry ** 2).sum()))
    if denom == 0.0:
        return 0.0
    return float((rx * ry).sum()) / denom


def fit_by_alpha(records: Sequence[ScalingRecord],
                 x_field: str = "h_k") -> dict[MultiIndex, tuple[float, float, float]]:
    """Per-alpha log-log fit of Lambda against the chosen record field."""
    out = {}
    for alpha in sorted({r.alpha for r in records}, key=lambda a: (mi.order(a), a)):
        xs = [getattr(r, x_field) for r in records if r.alpha == alpha]
        ys = [r.lam for r in records if r.alpha == alpha]
        out[alpha] = fit_loglog(xs, ys)
    return out


# -- emission ---------------------------------------------------------------------

def emit_csv(rows: Iterable, path: str, columns: Sequence[str] | None = None) -> None:
    """Write records (objects with csv_row/CSV_COLUMNS, dicts, or sequences)
    to CSV with unix newlines, so identical runs are byte-identical."""
    rows = list(rows)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if rows and hasattr(rows[0], "csv_row"):
            writer.writerow(type(rows[0]).CSV_COLUMNS)
            for r in rows:
                writer.writerow(r.csv_row())
        elif rows and isinstance(rows[0], dict):
            cols = list(columns) if columns else list(rows[0])
            writer.writerow(cols)
            for r in rows:
                writer.writerow([_csv_cell(r[c]) for c in cols])
        else:
            if columns:
                writer.writerow(list(columns))
            for r in rows:
                writer.writerow([_csv_cell(x) for x in r])


def _csv_cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def emit_svg_scatter(rows: Sequence, x_field: str, y_field: str,
                     loglog: bool, path: str, title: str = "",
                     fit_line: bool = True) -> None:
    """Self-contained SVG scatter plot with axes, tick labels (log decades in
    log-log mode), and an optional least-squares line overlay."""
    def get(row, name):
        if isinstance(row, dict):
            return float(row[name])
        return float(getattr(row, name))

    xs = np.array([get(r, x_field) for r in rows])
    ys = np.array([get(r, y_field) for r in rows])
    keep = np.isfinite(xs) & np.isfinite(ys)
    if loglog:
        keep &= (xs > 0) & (ys > 0)
    xs, ys = xs[keep], ys[keep]
    if len(xs) == 0:
        raise ValueError("nothing to plot")

    w, h, ml, mr, mt, mb = 640, 480, 70, 20, 30, 50
    px, py = (np.log10(xs), np.log10(ys)) if loglog else (xs, ys)
    x0, x1 = float(px.min()), float(px.max())
    y0, y1 = float(py.min()), float(py.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad_x, pad_y = 0.05 * (x1 - x0), 0.05 * (y1 - y0)
    x0, x1, y0, y1 = x0 - pad_x, x1 + pad_x, y0 - pad_y, y1 + pad_y

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * (w - ml - mr)

    def sy(v):
        return h - mb - (v - y0) / (y1 - y0) * (h - mt - mb)

    def ticks(lo, hi):
        if loglog:
            return [t for t in range(math.ceil(lo), math.floor(hi) + 1)]
        step = 10 ** math.floor(math.log10(max(hi - lo, 1e-300)))
        if (hi - lo) / step > 5:
            step *= 2
        start = math.ceil(lo / step) * step
        out = []
        while start <= hi:
            out.append(start)
            start += step
        return out

    def tick_label(t):
        return f"1e{t}" if loglog else f"{t:g}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{w - ml - mr}" height="{h - mt - mb}" '
        'fill="none" stroke="black"/>',
    ]
    if title:
        parts.append(
            f'<text x="{w / 2:.1f}" y="20" text-anchor="middle" '
            f'font-size="14">{title}</text>'
        )
    for t in ticks(x0, x1):
        parts.append(
            f'<line x1="{sx(t):.2f}" y1="{h - mb}" x2="{sx(t):.2f}" '
            f'y2="{h - mb + 5}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{sx(t):.2f}" y="{h - mb + 18}" text-anchor="middle" '
            f'font-size="11">{tick_label(t)}</text>'
        )
    for t in ticks(y0, y1):
        parts.append(
            f'<line x1="{ml - 5}" y1="{sy(t):.2f}" x2="{ml}" y2="{sy(t):.2f}" '
            'stroke="black"/>'
        )
        parts.append(
            f'<text x="{ml - 8}" y="{sy(t):.2f}" text-anchor="end" '
            f'font-size="11">{tick_label(t)}</text>'
        )
    parts.append(
        f'<text x="{w / 2:.1f}" y="{h - 12}" text-anchor="middle" '
        f'font-size="12">{x_field}</text>'
    )
    parts.append(
        f'<text x="16" y="{h / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {h / 2:.1f})">{y_field}</text>'
    )

    if fit_line and len(xs) >= 2 and loglog:
        slope, intercept, _ = fit_loglog(xs, ys)
        fy0 = (slope * (x0 * math.log(10)) + intercept) / math.log(10)
        fy1 = (slope * (x1 * math.log(10)) + intercept) / math.log(10)
        parts.append(
            f'<line x1="{sx(x0):.2f}" y1="{sy(fy0):.2f}" x2="{sx(x1):.2f}" '
            f'y2="{sy(fy1):.2f}" stroke="red" stroke-width="1.2"/>'
        )
        parts.append(
            f'<text x="{w - mr - 6}" y="{mt + 16}" text-anchor="end" '
            f'font-size="12" fill="red">slope {slope:.3f}</text>'
        )
    elif fit_line and len(xs) >= 2:
        slope, intercept = np.polyfit(xs, ys, 1)
        parts.append(
            f'<line x1="{sx(x0):.2f}" y1="{sy(slope * x0 + intercept):.2f}" '
            f'x2="{sx(x1):.2f}" y2="{sy(slope * x1 + intercept):.2f}" '
            'stroke="red" stroke-width="1.2"/>'
        )

    for vx, vy in zip(px, py):
        parts.append(
            f'<circle cx="{sx(vx):.2f}" cy="{sy(vy):.2f}" r="2.5" '
            'fill="steelblue" fill-opacity="0.7"/>'
        )
    parts.append("</svg>")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(parts) + "\n")


def records_to_dicts(records: Sequence) -> list[dict]:
    """Records as plain dicts keyed by their CSV columns (plot input)."""
    out = []
    for r in records:
        out.append(dict(zip(type(r).CSV_COLUMNS, r.csv_row())))
    return out


def slopes_to_json(fits: dict[MultiIndex, tuple[float, float, float]]) -> list[dict]:
    return [
        {"alpha": list(alpha), "slope": s, "intercept": b, "r2": r2}
        for alpha, (s, b, r2) in fits.items()
    ]
