"""Command-line interface.

Subcommands::

    validate    check a polygon/polytope JSON file, print a report
    eval        coordinates or a derivative at a point
    bounds      det(M_v) ranges, the W floor, and the certified bound
    gen         random polygons, degeneration families, or a CVT mesh
    audit       per-cell shape reports and histograms for a mesh
    experiment  the vs-hK / vs-n / degeneration studies

Exit codes: 0 success, 1 usage error, 2 invalid geometry, 3 domain error
(e.g. point outside the polytope), 4 I/O error. All outputs are deterministic
given the same inputs, flags, and seed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import multiindex as mi
from .coords import WachspressBasis
from .experiments import (
    DegenerationConfig,
    VsHkConfig,
    VsNConfig,
    emit_csv,
    emit_svg_scatter,
    fit_by_alpha,
    fit_loglog,
    records_to_dicts,
    run_degeneration,
    run_scaling_vs_hk,
    run_scaling_vs_n,
    slopes_to_json,
    spearman,
)
from .polygen import (
    PolyMesh,
    RngStream,
    cvt_mesh,
    eliminate_short_edges,
    family_k,
    mesh_stats,
    random_convex_polygon,
)
from .polytope import GeometryError, ShapeReport, Thresholds, polytope_from_json, shape_report

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_GEOMETRY = 2
EXIT_DOMAIN = 3
EXIT_IO = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; keep 2 for geometry
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        print(f"cannot read {path}: {exc}", file=sys.stderr)
        sys.exit(EXIT_IO)
    except json.JSONDecodeError as exc:
        print(f"{path} is not valid JSON: {exc}", file=sys.stderr)
        sys.exit(EXIT_IO)


def _dump_json(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path:
        try:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        except OSError as exc:
            print(f"cannot write {path}: {exc}", file=sys.stderr)
            sys.exit(EXIT_IO)
    else:
        print(text)


def _parse_alpha(text: str) -> mi.MultiIndex:
    try:
        return mi.as_multi_index([int(p) for p in text.split(",")])
    except ValueError as exc:
        print(f"bad multi-index {text!r}: {exc}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _parse_point(text: str) -> np.ndarray:
    try:
        return np.array([float(p) for p in text.split(",")])
    except ValueError:
        print(f"bad point {text!r}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _load_polytope(path: str):
    obj = _load_json(path)
    try:
        return polytope_from_json(obj)
    except GeometryError as exc:
        print(f"invalid geometry: {type(exc).__name__}: {exc}", file=sys.stderr)
        sys.exit(EXIT_GEOMETRY)


def _thresholds(args) -> Thresholds:
    if getattr(args, "thresholds", None):
        return Thresholds.from_json(_load_json(args.thresholds))
    return Thresholds()


# -- subcommands ----------------------------------------------------------------

def cmd_validate(args) -> int:
    obj = _load_json(args.polytope)
    try:
        poly = polytope_from_json(obj)
    except GeometryError as exc:
        _dump_json({"valid": False, "error": type(exc).__name__,
                    "detail": str(exc)}, args.out)
        return EXIT_GEOMETRY
    report = {
        "valid": True,
        "d": poly.dim,
        "n_vertices": poly.n_vertices,
        "n_facets": poly.n_facets,
        "h_K": poly.diameter(),
        "h_star": poly.h_star(),
    }
    if poly.dim == 2:
        report["shape"] = shape_report(poly, _thresholds(args)).to_json()
    _dump_json(report, args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    poly = _load_polytope(args.polytope)
    basis = WachspressBasis(poly)
    x = _parse_point(args.point)
    if len(x) != poly.dim:
        print(f"point has {len(x)} coordinates, polytope is {poly.dim}-d",
              file=sys.stderr)
        return EXIT_USAGE
    if not poly.contains(x):
        print(f"point {args.point} lies outside the polytope", file=sys.stderr)
        return EXIT_DOMAIN
    alpha = _parse_alpha(args.alpha) if args.alpha else None
    if alpha is not None and len(alpha) != poly.dim:
        print("multi-index length must equal the dimension", file=sys.stderr)
        return EXIT_USAGE
    if alpha is None:
        values = basis.phi_all(x).tolist()
        key = "phi"
    else:
        table = basis.d_phi_table([alpha], x.reshape(1, -1))[0][:, 0]
        values = table.tolist()
        key = "d_phi"
    out = {"point": x.tolist(), "alpha": list(alpha) if alpha else None}
    if args.vertex is not None:
        if not 0 <= args.vertex < poly.n_vertices:
            print("vertex id out of range", file=sys.stderr)
            return EXIT_USAGE
        out[key] = values[args.vertex]
        out["vertex"] = args.vertex
    else:
        out[key] = values
    _dump_json(out, args.out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    poly = _load_polytope(args.polytope)
    basis = WachspressBasis(poly)
    alpha = _parse_alpha(args.alpha)
    breakdown = basis.certified_dphi_bound(alpha)
    _dump_json({
        "alpha": list(alpha),
        "det_m": [
            dict(zip(("lower", "actual", "upper"), basis.detm_bounds(v)))
            for v in range(poly.n_vertices)
        ],
        "w_lower_bound": basis.w_lower_bound(),
        "certified_dphi_bound": {
            "total": breakdown.total,
            "base_term": breakdown.base_term,
            "terms": [
                {"beta": list(t.beta), "lambda": t.lam,
                 "partition": t.partition_id, "value": t.value}
                for t in breakdown.per_term
            ],
        },
    }, args.out)
    return EXIT_OK


def cmd_gen(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    if args.random is not None:
        base = RngStream(args.seed)
        for i in range(args.random):
            poly = random_convex_polygon(base.spawn(i))
            _dump_json(poly.to_json(), os.path.join(args.out, f"polygon_{i:04d}.json"))
        return EXIT_OK
    if args.family is not None:
        if args.a is None:
            print("--family requires --a", file=sys.stderr)
            return EXIT_USAGE
        try:
            poly = family_k(int(args.family[1]), args.a)
        except (GeometryError, ValueError) as exc:
            print(f"invalid family polygon: {exc}", file=sys.stderr)
            return EXIT_GEOMETRY
        _dump_json(poly.to_json(), os.path.join(
            args.out, f"{args.family.lower()}_a{args.a:g}.json"))
        return EXIT_OK
    # CVT mesh
    sites = None
    if args.sites:
        sites = _load_json(args.sites)
    mesh = cvt_mesh(args.cvt, RngStream(args.seed), sites=sites,
                    max_iter=args.max_iter)
    if args.fix_short_edges:
        mesh = eliminate_short_edges(mesh)
    mesh.validate()
    _dump_json(mesh.to_json(), os.path.join(args.out, "mesh.json"))
    return EXIT_OK


def cmd_audit(args) -> int:
    mesh = PolyMesh.from_json(_load_json(args.mesh))
    try:
        mesh.validate()
    except GeometryError as exc:
        print(f"invalid mesh: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    os.makedirs(args.out, exist_ok=True)
    reports, (hist, edges), ngons = mesh_stats(mesh, _thresholds(args))

    cell_rows = [
        [cid] + rep.csv_row() for cid, rep in enumerate(reports)
    ]
    emit_csv(cell_rows, os.path.join(args.out, "cells.csv"),
             columns=("cell_id",) + ShapeReport.CSV_COLUMNS)
    hist_rows = [
        ["h_star_ratio", repr(edges[i]), repr(edges[i + 1]), hist[i]]
        for i in range(len(hist))
    ] + [
        ["ngon", str(n), str(n), c] for n, c in ngons.items()
    ]
    emit_csv(hist_rows, os.path.join(args.out, "histogram.csv"),
             columns=("kind", "bin_lo", "bin_hi", "count"))
    ratio_rows = [{"cell_id": cid, "h_star_ratio": rep.h_star_ratio,
                   "n_vertices": rep.n_vertices} for cid, rep in enumerate(reports)]
    emit_svg_scatter(ratio_rows, "n_vertices", "h_star_ratio", False,
                     os.path.join(args.out, "ratio_vs_n.svg"),
                     title="h_star/h_K against cell vertex count",
                     fit_line=False)
    short = [r for r in reports if r.h_star_ratio < 0.1]
    _dump_json({
        "cells": len(reports),
        "ngons": {str(k): v for k, v in ngons.items()},
        "min_h_star_ratio": min(r.h_star_ratio for r in reports),
        "max_h_star_ratio": max(r.h_star_ratio for r in reports),
        "cells_below_ratio_0.1": len(short),
    }, os.path.join(args.out, "summary.json"))
    return EXIT_OK


def cmd_experiment(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    config = _load_json(args.config) if args.config else {}
    if args.seed is not None and args.name in ("vs-hK", "vs-n"):
        config.setdefault("seed", args.seed)
    if args.density is not None:
        config.setdefault("density", args.density)

    if args.name == "vs-hK":
        records = run_scaling_vs_hk(VsHkConfig.from_json(config))
        emit_csv(records, os.path.join(args.out, "vs_hk.csv"))
        fits = fit_by_alpha(records, "h_k")
        _dump_json(slopes_to_json(fits), os.path.join(args.out, "slopes.json"))
        rows = records_to_dicts(records)
        for k in (1, 2, 3):
            sub = [r for r in rows if int(r["alpha_x"]) + int(r["alpha_y"]) == k]
            emit_svg_scatter(sub, "h_K", "lambda", True,
                             os.path.join(args.out, f"lambda_vs_hk_order{k}.svg"),
                             title=f"Lambda against h_K, derivative order {k}")
        return EXIT_OK

    if args.name == "vs-n":
        records = run_scaling_vs_n(VsNConfig.from_json(config))
        emit_csv(records, os.path.join(args.out, "vs_n.csv"))
        summary = []
        for alpha in sorted({r.alpha for r in records},
                            key=lambda a: (mi.order(a), a)):
            rows = [r for r in records if r.alpha == alpha]
            per_n: dict[int, float] = {}
            for r in rows:
                per_n[r.n_vertices] = max(per_n.get(r.n_vertices, 0.0), r.lam)
            xs, ys = zip(*sorted(per_n.items()))
            summary.append({
                "alpha": list(alpha),
                "per_n_max": {str(n): v for n, v in sorted(per_n.items())},
                "spearman": spearman(xs, ys),
            })
        _dump_json(summary, os.path.join(args.out, "per_n_summary.json"))
        rows = records_to_dicts(records)
        emit_svg_scatter(rows, "n_vertices", "lambda", False,
                         os.path.join(args.out, "lambda_vs_n.svg"),
                         title="Lambda against vertex count", fit_line=False)
        return EXIT_OK

    if args.name == "degeneration":
        cfg = DegenerationConfig.from_json(config)
        records = run_degeneration(cfg)
        emit_csv(records, os.path.join(args.out, f"degeneration_k{cfg.family}.csv"))
        fits = {}
        for alpha in sorted({r.alpha for r in records},
                            key=lambda a: (mi.order(a), a)):
            rows = [r for r in records if r.alpha == alpha]
            fits[alpha] = fit_loglog(
                [r.h_star for r in rows], [r.lam for r in rows]
            )
        _dump_json(slopes_to_json(fits),
                   os.path.join(args.out, "slopes_vs_hstar.json"))
        dict_rows = records_to_dicts(records)
        emit_svg_scatter(dict_rows, "h_star", "lambda", True,
                         os.path.join(args.out, f"lambda_vs_hstar_k{cfg.family}.svg"),
                         title=f"Lambda against h_star on K{cfg.family}")
        per_vertex_rows = []
        for r in records:
            for v, val in enumerate(r.per_vertex_max):
                per_vertex_rows.append({
                    "a": r.a, "h_star": r.h_star, "alpha_x": r.alpha[0],
                    "alpha_y": r.alpha[1], "vertex": v,
                    "incident": int(v < 2), "max_abs_dphi": val,
                })
        if per_vertex_rows:
            emit_csv(per_vertex_rows,
                     os.path.join(args.out, f"per_vertex_k{cfg.family}.csv"),
                     columns=("a", "h_star", "alpha_x", "alpha_y", "vertex",
                              "incident", "max_abs_dphi"))
        return EXIT_OK

    print(f"unknown experiment {args.name!r}", file=sys.stderr)
    return EXIT_USAGE


def build_parser() -> _Parser:
    parser = _Parser(prog="wachspress", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a polytope JSON file")
    p.add_argument("polytope")
    p.add_argument("--thresholds", help="JSON file of shape thresholds")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("eval", help="evaluate coordinates or derivatives")
    p.add_argument("polytope")
    p.add_argument("--point", required=True, help="comma-separated coordinates")
    p.add_argument("--alpha", help="derivative multi-index, e.g. 2,1")
    p.add_argument("--vertex", type=int, help="restrict output to one vertex")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bounds", help="certified bounds for a polytope")
    p.add_argument("polytope")
    p.add_argument("--alpha", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("gen", help="generate polygons or meshes")
    kind = p.add_mutually_exclusive_group(required=True)
    kind.add_argument("--random", type=int, metavar="N",
                      help="N random convex polygons")
    kind.add_argument("--cvt", type=int, metavar="N_CELLS",
                      help="centroidal Voronoi mesh of the unit square")
    kind.add_argument("--family", choices=["K1", "K2", "K3"],
                      help="one of the degeneration hexagons")
    p.add_argument("--a", type=float, help="family parameter in (0, 1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sites", help="JSON file of initial CVT sites")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--fix-short-edges", action="store_true")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("audit", help="shape statistics of a mesh")
    p.add_argument("mesh")
    p.add_argument("--thresholds")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("experiment", help="run a named study")
    p.add_argument("name", choices=["vs-hK", "vs-n", "degeneration"])
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--density", type=int)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GeometryError as exc:
        print(f"invalid geometry: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
