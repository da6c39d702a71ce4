"""Command-line interface: ``slmg {mesh,assemble,solve,sweep,spectrum,field}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from slmg.analysis import spectrum_study, write_eigenvector_data
from slmg.assembly import assemble_double_layer, assemble_helmholtz, assemble_laplace, write_matrix
from slmg.errors import BemError, NoConvergence
from slmg.geometry import CircleBoundary, build_hierarchy
from slmg.problems import (
    ExperimentConfig,
    boundary_data,
    build_hierarchy_for,
    evaluate_field,
    get_geometry,
    run_experiment,
    run_sweep,
)
from slmg.weak_product import build_weak_operator

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


def _fraction(text: str) -> float:
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _fraction_list(text: str) -> list[float]:
    return [_fraction(t) for t in text.split(",") if t.strip()]


def _config(args) -> ExperimentConfig:
    data = {}
    if getattr(args, "config", None):
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    for key in ("geometry", "kappa", "H", "h", "solver", "smoothing", "tol", "max_iters", "formulation", "problem"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    return ExperimentConfig.from_dict(data)


def _add_config_args(p):
    p.add_argument("--config", help="JSON file with experiment keys")
    p.add_argument("--geometry")
    p.add_argument("--kappa", type=float)
    p.add_argument("--H", type=_fraction, help="coarsest mesh size, e.g. 1/4")
    p.add_argument("--h", type=_fraction, help="finest mesh size, e.g. 1/64")
    p.add_argument("--solver", choices=["mg", "gmres", "mg-gmres"])
    p.add_argument("--smoothing", choices=["pre", "prepost"])
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--formulation", choices=["direct", "indirect"])
    p.add_argument("--problem", choices=["point_source", "plane_wave"])


def cmd_mesh(args) -> int:
    cfg = _config(args)
    hier = build_hierarchy_for(cfg)
    print("level\tpanels\th\tuniform")
    for k, m in enumerate(hier.levels, start=1):
        print(f"{k}\t{m.n_panels}\t{m.h:.6g}\t{m.is_uniform}")
    return EXIT_OK


def cmd_assemble(args) -> int:
    cfg = _config(args)
    mesh = build_hierarchy_for(cfg).levels[-1]
    if args.kind == "laplace":
        mat = assemble_laplace(mesh)
    elif args.kind == "helmholtz":
        mat = assemble_helmholtz(mesh, cfg.kappa)
    else:
        mat = assemble_double_layer(mesh, cfg.kappa)
    write_matrix(args.output, mat, args.kind)
    print(f"wrote {mat.shape[0]}x{mat.shape[1]} {args.kind} matrix to {args.output}")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _config(args)
    res = run_experiment(cfg)
    rep = res.report
    print(json.dumps({
        "dof": res.n_dof,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "status": rep.status,
        "final_residual": rep.final_residual,
        "residual_history": rep.residual_history,
    }, indent=2))
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


def cmd_sweep(args) -> int:
    cfg = _config(args)
    table = run_sweep(cfg.geometry, cfg.kappa, _fraction_list(args.coarse), _fraction_list(args.fine), cfg.solver,
                      cfg.smoothing, cfg.tol, cfg.max_iters, cfg.formulation, source=cfg.source,
                      problem=cfg.problem, direction=cfg.direction)
    text = table.to_text(delimiter="," if args.csv else "\t")
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK if all(v is not None for v in table.cells.values()) else EXIT_NOT_CONVERGED


def cmd_spectrum(args) -> int:
    if args.circle:
        from slmg.assembly import assemble_circle_laplace

        mesh = build_hierarchy(CircleBoundary(args.circle), args.panels, 1).levels[0]
        lap = assemble_circle_laplace(mesh)
    else:
        geo = get_geometry(args.geometry or "small_square")
        mesh = build_hierarchy(geo.polygon(), geo.divisions(_fraction(args.mesh_size)), 1).levels[0]
        lap = assemble_laplace(mesh)
    op = build_weak_operator(mesh)
    print("kind\tindex\teigenvalue\tsign_changes")
    for kind in ("plain", "generalized"):
        rep = spectrum_study(lap, op, kind, args.count)
        for col, i in enumerate(rep.indices):
            print(f"{kind}\t{i}\t{rep.eigenvalues[i]:.10e}\t{rep.sign_changes[col]}")
        if args.output:
            write_eigenvector_data(args.output, mesh, rep)
    return EXIT_OK


def cmd_field(args) -> int:
    cfg = _config(args)
    res = run_experiment(cfg)
    mesh = build_hierarchy_for(cfg).levels[-1]
    geo = get_geometry(cfg.geometry)
    x0, x1, y0, y1 = args.box
    xs, ys = np.meshgrid(np.linspace(x0, x1, args.resolution), np.linspace(y0, y1, args.resolution))
    pts = np.c_[xs.ravel(), ys.ravel()]
    poly = geo.polygon()
    ok = ~poly.contains(pts) & (poly.distance(pts) > mesh.h)
    vals = np.full(len(pts), np.nan + 0j)
    g = boundary_data(cfg)
    vals[ok] = evaluate_field(mesh, res.solution, pts[ok], cfg.kappa, g, cfg.formulation)
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        out.write("x,y,re,im\n")
        for (x, y), v in zip(pts, vals):
            out.write(f"{x:.8g},{y:.8g},{v.real:.10g},{v.imag:.10g}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK if res.report.converged else EXIT_NOT_CONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slmg", description="Multigrid for the 2D acoustic single layer equation")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress and eigenvalue-estimate warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="build and inspect a mesh hierarchy")
    _add_config_args(p)
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("assemble", help="write a Galerkin matrix in the binary matrix format")
    _add_config_args(p)
    p.add_argument("--kind", choices=["laplace", "helmholtz", "double_layer"], default="helmholtz")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("solve", help="solve one configuration and print the report")
    _add_config_args(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="iteration-count table over coarse and fine mesh sizes")
    _add_config_args(p)
    p.add_argument("--coarse", required=True, help="comma-separated coarse sizes, e.g. 1/2,1/4")
    p.add_argument("--fine", required=True, help="comma-separated fine sizes")
    p.add_argument("--csv", action="store_true", help="comma instead of tab delimiters")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("spectrum", help="eigenvector smoothness study")
    p.add_argument("--geometry")
    p.add_argument("--mesh-size", default="1/50")
    p.add_argument("--circle", type=float, help="use a circle of this radius instead")
    p.add_argument("--panels", type=int, default=300)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("-o", "--output", help="directory for per-eigenvector data files")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("field", help="scattered field on a grid (CSV)")
    _add_config_args(p)
    p.add_argument("--box", type=float, nargs=4, default=(-1.0, 2.0, -1.0, 2.0), metavar=("X0", "X1", "Y0", "Y1"))
    p.add_argument("--resolution", type=int, default=41)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_field)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore", NoConvergence)
            return args.func(args)
    except (BemError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
