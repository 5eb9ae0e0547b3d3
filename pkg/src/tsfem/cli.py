"""Command line front end: mesh generation, effective-tensor solves,
the convergence study, and scenario runs.

Every failure prints one greppable ``error[<code>]: message`` line on
stderr; validation problems exit with status 2, runtime failures with 1.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .benchmark import BENCHMARK_SPECIES, eoc_report, run_benchmark
from .cell import compute_homogenized
from .config import GeometrySpec, parse_config
from .errors import ConfigError, RuntimeFailure, ValidationFailure
from .fem import expand_periodic
from .macro import build_scenario_meshes, homogenized_for, run_two_scale
from .mesh import (
    CircleHole,
    DziukHole,
    EllipseHole,
    MappedDiscSpec,
    PerforatedSquareSpec,
    SquareSpec,
    generate_mesh,
    match_periodic_nodes,
    mesh_stats,
    read_mesh,
    write_mesh,
)
from .output import FieldSnapshot, final_snapshots, write_snapshot, write_timeseries


def _matrix_text(d):
    rows = ", ".join(
        "[" + ", ".join(repr(float(v)) for v in row) + "]" for row in d)
    return f"[{rows}]"


def _bounds_pair(values):
    x0, x1, y0, y1 = (float(v) for v in values)
    return ((x0, x1), (y0, y1))


# ---------------------------------------------------------------------------
# mesh


def _cmd_mesh_gen(args):
    if args.bounds is not None:
        bounds = _bounds_pair(args.bounds)
    elif args.kind == "cell-exterior":
        bounds = ((-2.0, 2.0), (-2.0, 2.0))
    else:
        bounds = ((-0.5, 0.5), (-0.5, 0.5))
    if args.kind == "square":
        spec = SquareSpec(bounds=bounds, n=args.n)
    elif args.kind == "disc":
        spec = MappedDiscSpec(args.shape, a=args.a, b=args.b,
                              rings=args.rings, segments=args.segments)
    else:
        spec = PerforatedSquareSpec(_hole_from(args.hole, args.hole_params),
                                    bounds=bounds,
                                    segments_per_side=args.segments,
                                    layers=args.layers)
    mesh = generate_mesh(spec, level=args.level)
    write_mesh(mesh, args.out)
    stats = mesh_stats(mesh)
    print(f"wrote {args.out}: {stats.node_count} nodes, "
          f"{stats.triangle_count} triangles, h_max = {stats.h_max:.6g}")
    return 0


def _cmd_mesh_info(args):
    mesh = read_mesh(args.path)
    stats = mesh_stats(mesh)
    markers = sorted(set(mesh.boundary_markers))
    print(f"nodes = {stats.node_count}")
    print(f"triangles = {stats.triangle_count}")
    print(f"h_max = {stats.h_max:.6g}")
    print(f"min_angle_deg = {stats.min_angle:.6g}")
    print(f"total_area = {stats.total_area:.6g}")
    print(f"boundary_markers = {','.join(markers) if markers else 'none'}")
    print(f"periodic_classes = {len(mesh.periodic_classes)}")
    return 0


def _hole_from(kind, params):
    if params is None:
        params = _CELL_GEOMETRIES[kind][1]
    if kind == "circle":
        if len(params) != 1:
            raise ConfigError("--hole-params for a circle is RADIUS")
        return CircleHole(params[0])
    if kind == "ellipse":
        if len(params) != 2:
            raise ConfigError("--hole-params for an ellipse is C1 C2")
        return EllipseHole.from_coefficients(*params)
    if params:
        raise ConfigError("--hole-params must be empty for the curved shape")
    return DziukHole()


# ---------------------------------------------------------------------------
# cell problem

_CELL_GEOMETRIES = {
    "none": None,
    "circle": ("circle", (1.0,)),
    "ellipse": ("ellipse", (0.26, 5.0)),
    "dziuk": ("dziuk", ()),
}


def _cmd_cell_problem(args):
    if args.geometry == "none":
        print(f"d_hom = {_matrix_text(np.diag([args.d_e, args.d_e]))}")
        print("theta_e = 1.0")
        return 0
    kind, params = _CELL_GEOMETRIES[args.geometry]
    geometry = GeometrySpec(cell_kind=kind, cell_params=params)
    if kind == "circle":
        hole = CircleHole(params[0])
    elif kind == "ellipse":
        hole = EllipseHole.from_coefficients(*params)
    else:
        hole = DziukHole()
    mesh = generate_mesh(
        PerforatedSquareSpec(hole, bounds=geometry.cell_bounds,
                             segments_per_side=args.segments,
                             layers=args.layers),
        level=args.level)
    (x0, x1), (y0, y1) = geometry.cell_bounds
    matched = match_periodic_nodes(mesh, ((x1 - x0, 0.0), (0.0, y1 - y0)))
    hom = compute_homogenized(matched, args.d_e, geometry.cell_volume())
    d = hom.d_hom
    print(f"nodes = {matched.node_count}")
    print(f"d_hom = {_matrix_text(d)}")
    print(f"theta_e = {float(hom.theta_e)!r}")
    if args.out is not None:
        fields = {
            f"w{j + 1}": expand_periodic(w, hom.index_map)
            for j, w in enumerate(hom.cell_solutions)
        }
        write_snapshot(FieldSnapshot.from_mesh(matched, fields), args.out)
        print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# benchmark


def _parse_levels(text):
    parts = text.split("..")
    if len(parts) != 2:
        raise ConfigError(f"--levels must look like A..B, got '{text}'")
    try:
        first, last = int(parts[0]), int(parts[1])
    except ValueError:
        raise ConfigError(f"--levels must hold integers, got '{text}'") from None
    if first > last:
        raise ConfigError(f"--levels range is empty: {first} > {last}")
    return first, last


def _cmd_benchmark(args):
    first, last = _parse_levels(args.levels)
    records = [run_benchmark(level, tau0=args.tau0)
               for level in range(first, last + 1)]
    report = eoc_report(records) if len(records) >= 2 else None

    header = ["level", "h_omega", "h_cell", "h_curve", "tau"]
    for name in BENCHMARK_SPECIES:
        header += [f"{name}_l2h1", f"{name}_linfl2",
                   f"{name}_eoc_l2h1", f"{name}_eoc_linfl2"]
    rows = [",".join(header)]
    for k, rec in enumerate(records):
        row = [str(rec.level)] + [f"{h:.6g}" for h in rec.mesh_sizes]
        row.append(f"{rec.tau:.6g}")
        for name in BENCHMARK_SPECIES:
            row += [f"{rec.l2h1[name]:.6e}", f"{rec.linfl2[name]:.6e}"]
            if report is None or k == 0:
                row += ["", ""]
            else:
                row += [f"{report[name]['l2h1'][k - 1]:.4f}",
                        f"{report[name]['linfl2'][k - 1]:.4f}"]
        rows.append(",".join(row))
    text = "\n".join(rows) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# simulate


def _cmd_simulate(args):
    config = parse_config(args.config)
    meshes = build_scenario_meshes(config)
    hom = homogenized_for(config, meshes[3])
    d = np.asarray(hom.d_hom, dtype=float)
    print(f"d_hom = {_matrix_text(d)}")
    print(f"theta_e = {float(hom.theta_e)!r}")
    traj = run_two_scale(config, meshes=meshes)
    print(f"steps = {len(traj.probe_times) - 1}")
    print(f"final_time = {float(traj.probe_times[-1])!r}")
    for name, (low, high) in traj.extrema.items():
        print(f"{name}: min = {low:.6g}, max = {high:.6g}")
    if args.series is not None:
        write_timeseries(traj, args.series)
        print(f"wrote {args.series}")
    if args.snapshot_prefix is not None:
        macro_mesh, cell_mesh, curve, _ = meshes
        snaps = final_snapshots(traj, macro_mesh, curve=curve,
                                cell_mesh=cell_mesh)
        for name, snap in snaps.items():
            path = f"{args.snapshot_prefix}{name}.vtk"
            write_snapshot(snap, path)
            print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# parser and entry point


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tsfem",
        description="Two-scale bulk-surface finite element engine.")
    sub = parser.add_subparsers(dest="command", required=True)

    mesh = sub.add_parser("mesh", help="generate or inspect mesh files")
    mesh_sub = mesh.add_subparsers(dest="mesh_command", required=True)
    gen = mesh_sub.add_parser("gen", help="generate a mesh and write it")
    gen.add_argument("--kind", choices=("square", "disc", "cell-exterior"),
                     default="square")
    gen.add_argument("--out", required=True)
    gen.add_argument("--level", type=int, default=0)
    gen.add_argument("--bounds", type=float, nargs=4, default=None,
                     metavar=("X0", "X1", "Y0", "Y1"),
                     help="defaults to the unit square about the origin, "
                          "or (-2, 2)^2 for cell-exterior meshes")
    gen.add_argument("--n", type=int, default=8,
                     help="square cells per side")
    gen.add_argument("--shape", choices=("identity", "ellipse", "dziuk"),
                     default="identity", help="disc boundary shape")
    gen.add_argument("--a", type=float, default=1.0)
    gen.add_argument("--b", type=float, default=1.0)
    gen.add_argument("--rings", type=int, default=6)
    gen.add_argument("--segments", type=int, default=24,
                     help="disc boundary segments, or perforated-square "
                          "segments per side")
    gen.add_argument("--layers", type=int, default=8)
    gen.add_argument("--hole", choices=("circle", "ellipse", "dziuk"),
                     default="circle")
    gen.add_argument("--hole-params", type=float, nargs="*", default=None,
                     help="circle: RADIUS; ellipse: C1 C2; defaults per shape")
    gen.set_defaults(handler=_cmd_mesh_gen)
    info = mesh_sub.add_parser("info", help="print mesh statistics")
    info.add_argument("path")
    info.set_defaults(handler=_cmd_mesh_info)

    cell = sub.add_parser("cell-problem",
                          help="solve the periodic cell problem")
    cell.add_argument("--geometry", choices=tuple(_CELL_GEOMETRIES),
                      required=True)
    cell.add_argument("--level", type=int, default=0,
                      help="doublings of the base cell resolution")
    cell.add_argument("--d-e", type=float, default=1e-2, dest="d_e")
    cell.add_argument("--segments", type=int, default=32,
                      help="base segments per cell side")
    cell.add_argument("--layers", type=int, default=3,
                      help="base boundary-layer count")
    cell.add_argument("--out", default=None,
                      help="write the corrector fields as VTK")
    cell.set_defaults(handler=_cmd_cell_problem)

    bench = sub.add_parser("benchmark", help="run the convergence study")
    bench.add_argument("--levels", default="0..3", help="range A..B")
    bench.add_argument("--tau0", type=float, default=0.0625,
                       help="timestep at level 0 (quartered per level)")
    bench.add_argument("--out", default=None, help="CSV path (default stdout)")
    bench.set_defaults(handler=_cmd_benchmark)

    sim = sub.add_parser("simulate", help="run a configured scenario")
    sim.add_argument("--config", required=True)
    sim.add_argument("--series", default=None,
                     help="write the probe time series as CSV")
    sim.add_argument("--snapshot-prefix", default=None,
                     help="write final-state VTK snapshots with this prefix")
    sim.set_defaults(handler=_cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return args.handler(args)
    except ValidationFailure as exc:
        print(f"error[{exc.code}]: {_one_line(exc)}", file=sys.stderr)
        return 2
    except RuntimeFailure as exc:
        print(f"error[{exc.code}]: {_one_line(exc)}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[io]: {_one_line(exc)}", file=sys.stderr)
        return 1


def _one_line(exc):
    return " ".join(str(exc).split())


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
