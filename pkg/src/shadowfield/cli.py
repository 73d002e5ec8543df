"""``shadowfield`` command line: ingest, field, slice, compare, bench, plan.

All lengths are meters, times seconds.  Each command writes its artifact to a
temporary name and renames it into place, so a zero exit status means the
output is complete.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import oracle, planner
from .field import (FieldSlice, load_field, save_field, update_shadow_field,
                    update_shadow_field_2d, write_pgm)
from .occupancy import (GridGeometry, FormatError, ingest_points, load_grid, new_grid,
                        read_points, save_grid)
from .scenario import ScenarioError, load_scenario

log = logging.getLogger("shadowfield")


class CommandError(Exception):
    pass


@contextlib.contextmanager
def _atomic(path):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.partial")
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _figure(args, fn, *fargs, **kw):
    if args.no_figures:
        return
    try:
        fn(*fargs, **kw)
    except Exception as exc:  # a figure is a side product; never fail the command on it
        log.warning("figure not written: %s", exc)


def _png_next_to(path, suffix=""):
    p = Path(path)
    return p.with_name(p.stem + suffix + ".png")


def _extents_arg(values, resolution):
    """Meters to cells: one radius, three per-axis radii or six (pos xyz, neg xyz)."""
    if values is None:
        return None
    cells = [int(round(v * resolution)) for v in values]
    if any(c < 0 for c in cells):
        raise CommandError("extents must be nonnegative")
    if len(cells) == 1:
        return cells[0]
    if len(cells) == 3:
        return tuple(cells)
    if len(cells) == 6:
        return tuple(cells[:3]), tuple(cells[3:])
    raise CommandError("--extent takes 1, 3 or 6 values")


def _build_field(grid, light, extent, threshold):
    ext = _extents_arg(extent, grid.geometry.resolution)
    if grid.geometry.is_2d:
        if isinstance(ext, tuple) and isinstance(ext[0], tuple):
            ext = (ext[0][:2], ext[1][:2])
        elif isinstance(ext, tuple):
            ext = ext[:2]
        return update_shadow_field_2d(grid, light, ext, threshold)
    return update_shadow_field(grid, light, ext, threshold)


def _light(grid, values):
    light = np.asarray(values, dtype=float)
    if grid.geometry.is_2d and len(light) == 2:
        light = grid.geometry.point3(light)
    if light.shape != (3,):
        raise CommandError("--light needs x y z (or x y on a planar grid)")
    return light


def cmd_ingest(args):
    res = args.resolution
    size = np.asarray(args.size, dtype=float)
    if len(size) not in (2, 3) or np.any(size <= 0):
        raise CommandError("--size needs 2 or 3 positive lengths in meters")
    dims = tuple(max(1, int(round(s * res))) for s in size)
    origin = tuple(args.origin) if args.origin else (0.5 / res,) * len(dims)
    geo = GridGeometry(dims, res, origin)
    grid = new_grid(geo, args.prior)
    pts = read_points(args.points)
    sensor = np.asarray(args.sensor_origin, dtype=float)
    if geo.is_2d:
        # planar grid: project returns and sensor onto its plane
        pts[:, 2] = geo.origin[2]
        sensor[2] = geo.origin[2]
    ingest_points(grid, pts, args.hit, args.miss, args.max_range, sensor)
    with _atomic(args.out) as tmp:
        save_grid(grid, tmp)
    print(f"cells {geo.n_cells}")
    print(f"occupied {grid.occupied_count(args.threshold)}")


def cmd_field(args):
    grid = load_grid(args.grid)
    light = _light(grid, args.light)
    _build_field(grid, light, args.extent, args.threshold)        # JIT and weights warm-up
    t0 = time.perf_counter()
    field = _build_field(grid, light, args.extent, args.threshold)
    dt = time.perf_counter() - t0
    with _atomic(args.out) as tmp:
        save_field(field, tmp)
    n = field.values.size
    print(f"cells {n}")
    print(f"update_seconds {dt:.6f}")
    print(f"cells_per_second {n / dt:.4g}")
    print(f"min_value {float(field.values.min())!r}")


def cmd_slice(args):
    field = load_field(args.field)
    fs: FieldSlice = field.slice(args.axis, args.level)
    comments = [f"axis {'xyz'[fs.axis]} level {fs.level!r}",
                f"origin {fs.geometry.origin[0]!r} {fs.geometry.origin[1]!r}",
                f"resolution {fs.geometry.resolution!r}"]
    with _atomic(args.out) as tmp:
        write_pgm(tmp, fs.values, comments)
    from .plotting import plot_slice
    _figure(args, plot_slice, fs, _png_next_to(args.out))
    print(f"pixels {fs.values.shape[0]}x{fs.values.shape[1]}")


def cmd_compare(args):
    grid = load_grid(args.grid)
    light = _light(grid, args.light)
    along, fixed = oracle.parse_line_spec(args.line, grid.geometry.is_2d)
    soft = _build_field(grid, light, args.extent, args.threshold)
    hard = oracle.hard_field(grid, light, soft_extents(soft), args.threshold)
    rows = oracle.compare_profile(soft, hard, along, fixed)
    with _atomic(args.out) as tmp:
        oracle.write_profile_csv(rows, tmp)
    from .plotting import plot_profile
    _figure(args, plot_profile, rows, _png_next_to(args.out), f"{'xyz'[along]} [m]")
    print(f"rows {len(rows)}")


def soft_extents(field):
    return field.extents_pos, field.extents_neg


def cmd_bench(args):
    if args.repetitions < 1:
        raise CommandError("--repetitions must be >= 1")
    rows = bench_mod.run_bench(args.sizes, args.repetitions)
    with _atomic(args.out) as tmp:
        bench_mod.write_bench_csv(rows, tmp)
    slope = bench_mod.scaling_slope(rows) if len(rows) > 1 else None
    from .plotting import plot_bench
    _figure(args, plot_bench, rows, _png_next_to(args.out), slope)
    for r in rows:
        print(f"{r.cells} cells: {r.mean_seconds * 1e3:.3f} ms")
    if slope is not None:
        print(f"slope {slope:.3f}")


def cmd_plan(args):
    sc = load_scenario(args.scenario)
    if args.rh_steps is not None:
        sc = sc.with_changes(rh_steps=args.rh_steps)
    grid = sc.build_grid()
    field = update_shadow_field(grid, sc.light, threshold=sc.threshold)
    result = planner.receding_horizon(sc, lambda k, x: field)
    prefix = args.out_prefix
    traj_path = Path(f"{prefix}_trajectory.csv")
    log_path = Path(f"{prefix}_log.csv")
    pgm_path = Path(f"{prefix}_slice.pgm")
    traj_path.parent.mkdir(parents=True, exist_ok=True)

    states = result.executed.states
    level = float(states[-1, 2])
    fs = field.slice("z", level)
    comments = [f"axis z level {level!r}",
                f"origin {fs.geometry.origin[0]!r} {fs.geometry.origin[1]!r}",
                f"resolution {fs.geometry.resolution!r}"]
    comments += [f"path {s[0]!r} {s[1]!r}" for s in states]
    with _atomic(traj_path) as tmp:
        planner.write_trajectory_csv(result.executed, sc.dt, tmp)
    with _atomic(log_path) as tmp:
        planner.write_log_csv(result.logs, tmp)
    with _atomic(pgm_path) as tmp:
        write_pgm(tmp, fs.values, comments)

    from .plotting import plot_plan_log, plot_slice
    occ = grid.geometry.index_to_world(np.argwhere(grid.values > sc.threshold))
    near = np.abs(occ[:, 2] - level) <= 0.5 / grid.geometry.resolution
    _figure(args, plot_slice, fs, Path(f"{prefix}_slice.png"), states[:, :2], occ[near][:, :2])
    _figure(args, plot_plan_log, result.logs, Path(f"{prefix}_log.png"))
    last = result.logs[-1]
    print(f"steps {len(result.logs) - 1}")
    print(f"final_F {last.F:.6f}")
    print(f"final_ec {last.ec:.6f}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shadowfield", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, figures=False):
        if figures:
            sp.add_argument("--no-figures", action="store_true",
                            help="skip the PNG written next to the output")
        return sp

    s = sub.add_parser("ingest", help="build an occupancy grid from an ASCII point cloud")
    s.add_argument("points")
    s.add_argument("--size", type=float, nargs="+", required=True, metavar="M",
                   help="grid extent per axis in meters (2 or 3 values)")
    s.add_argument("--resolution", type=float, default=10.0, help="cells per meter")
    s.add_argument("--origin", type=float, nargs="+", help="center of the first cell [m]")
    s.add_argument("--sensor-origin", type=float, nargs=3, default=(0.0, 0.0, 0.0))
    s.add_argument("--hit", type=float, default=0.85, help="log-odds per hit")
    s.add_argument("--miss", type=float, default=-0.4, help="log-odds per pass-through")
    s.add_argument("--max-range", type=float, default=30.0)
    s.add_argument("--prior", type=float, default=0.5, help="initial occupancy probability")
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("field", help="compute a shadow field")
    s.add_argument("grid")
    s.add_argument("--light", type=float, nargs="+", required=True, metavar="M")
    s.add_argument("--extent", type=float, nargs="+", metavar="M",
                   help="window half-size in meters: 1, 3 or 6 values")
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_field)

    s = common(sub.add_parser("slice", help="export a field plane as PGM"), figures=True)
    s.add_argument("field")
    s.add_argument("--axis", default="z", choices=["x", "y", "z"])
    s.add_argument("--level", type=float, required=True, help="plane coordinate [m]")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_slice)

    s = common(sub.add_parser("compare", help="soft vs ray-cast profile as CSV"), figures=True)
    s.add_argument("grid")
    s.add_argument("--light", type=float, nargs="+", required=True, metavar="M")
    s.add_argument("--line", required=True, help='e.g. "x=7.0" or "x=7.0,z=0.5"')
    s.add_argument("--extent", type=float, nargs="+", metavar="M")
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_compare)

    s = common(sub.add_parser("bench", help="time full updates on cubic grids"), figures=True)
    s.add_argument("--sizes", type=int, nargs="+", default=[40, 50, 64, 80, 100, 128, 160],
                   help="cube side lengths in cells")
    s.add_argument("--repetitions", type=int, default=3)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_bench)

    s = common(sub.add_parser("plan", help="run the receding-horizon planner"), figures=True)
    s.add_argument("scenario")
    s.add_argument("--out-prefix", required=True)
    s.add_argument("--rh-steps", type=int, help="override the scenario's step count")
    s.set_defaults(func=cmd_plan)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CommandError, FormatError, ScenarioError, ValueError, OSError) as exc:
        print(f"shadowfield {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
