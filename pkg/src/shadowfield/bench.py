"""Timing harness for full field updates on cubic grids."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from .field import update_shadow_field
from .occupancy import GridGeometry, add_box, new_grid
from .weights import init_weights_3d


@dataclass(frozen=True)
class BenchRow:
    side: int
    cells: int
    mean_seconds: float
    cells_per_second: float


def bench_scene(side: int, resolution: float = 10.0):
    """Cube of ``side`` cells with a few boxes and the light at the center."""
    geo = GridGeometry((side, side, side), resolution)
    grid = new_grid(geo, 0.0)
    size = side / resolution
    rng = np.random.default_rng(side)
    for _ in range(6):
        c = rng.uniform(0.1, 0.9, 3) * size
        half = rng.uniform(0.03, 0.08, 3) * size
        add_box(grid, c - half, c + half, 0.9)
    light = np.full(3, (side // 2) / resolution)
    grid.values[tuple(geo.world_to_index(light))] = 0.0
    return grid, light


def time_update(grid, light, repetitions: int, threads: int | None = None) -> float:
    """Mean wall time of ``repetitions`` updates, weights cache warm."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    update_shadow_field(grid, light, threads=threads)     # JIT and weights warm-up
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        update_shadow_field(grid, light, threads=threads)
        times.append(time.perf_counter() - t0)
    return float(np.mean(times))


def run_bench(sides, repetitions: int = 3, threads: int | None = None) -> list[BenchRow]:
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    sides = [int(s) for s in sides]
    if not sides or any(s < 2 for s in sides):
        raise ValueError("sizes must be integers >= 2")
    init_weights_3d((max(sides),) * 3)
    rows = []
    for s in sides:
        grid, light = bench_scene(s)
        mean = time_update(grid, light, repetitions, threads)
        rows.append(BenchRow(s, s ** 3, mean, s ** 3 / mean))
    return rows


def scaling_slope(rows) -> float:
    """Least-squares slope of log(time) against log(cells)."""
    x = np.log([r.cells for r in rows])
    y = np.log([r.mean_seconds for r in rows])
    return float(np.polyfit(x, y, 1)[0])


def write_bench_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cells", "mean_seconds", "cells_per_second"])
        for r in rows:
            w.writerow([r.cells, repr(r.mean_seconds), repr(r.cells_per_second)])
