"""Deterministic ray-cast visibility (hard shadows).

Used as the reference the soft field is validated against, and for
soft-versus-hard profile comparisons.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .field import DEFAULT_THRESHOLD, ShadowField, _axis, _local_occupancy, _prepare
from .occupancy import GridGeometry, OccupancyGrid


@dataclass(frozen=True)
class VisibilityVerdict:
    visible: bool
    first_blocker: tuple[int, int, int] | None
    cells_traversed: int


def _lattice(geometry: GridGeometry, p) -> np.ndarray:
    p = geometry.point3(p)
    return (p - np.asarray(geometry.origin)) * geometry.resolution + 0.5


def traverse_cells(geometry: GridGeometry, a, b) -> np.ndarray:
    """Cells (global indices, possibly out of bounds) crossed by segment a-b."""
    return _kernels.dda_cells(_lattice(geometry, a), _lattice(geometry, b))


def line_of_sight(occ: OccupancyGrid, a, b,
                  threshold: float = DEFAULT_THRESHOLD) -> VisibilityVerdict:
    """Visible iff no cell strictly between the end cells is occupied."""
    a = occ.geometry.point3(a)
    b = occ.geometry.point3(b)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("segment endpoints must be finite")
    blocked, x, y, z, n = _kernels.dda_blocker(
        _lattice(occ.geometry, a), _lattice(occ.geometry, b), occ.values, float(threshold))
    if blocked:
        return VisibilityVerdict(False, (int(x), int(y), int(z)), int(n))
    return VisibilityVerdict(True, None, int(n))


def hard_field(occ: OccupancyGrid, light_world, extents=None,
               threshold: float = DEFAULT_THRESHOLD) -> ShadowField:
    """Binary field on the same window a soft field with these arguments uses."""
    lg, pos, neg, dims, start, fgeo = _prepare(occ, light_world, extents)
    occ_local = _local_occupancy(occ, start, dims)
    values = _kernels.hard_field_kernel(occ_local, neg[0], neg[1], neg[2], float(threshold))
    return ShadowField(fgeo, values, tuple(neg), lg, float(threshold),
                       tuple(float(v) for v in occ.geometry.point3(light_world)))


def parse_line_spec(spec: str, is_2d: bool = True):
    """``"x=7.0"`` (planar) or ``"x=7.0,z=0.5"`` -> (along_axis, {axis: coord})."""
    fixed = {}
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        key, sep, val = part.partition("=")
        if not sep:
            raise ValueError(f"line spec part {part!r} is not axis=value")
        a = _axis(key.strip())
        if a in fixed:
            raise ValueError(f"axis {key} given twice in line spec")
        fixed[a] = float(val)
    free = [a for a in range(3) if a not in fixed]
    if is_2d and 2 in free and len(free) == 2:
        free.remove(2)
    if len(free) != 1:
        raise ValueError(f"line spec {spec!r} must fix all axes but one")
    return free[0], fixed


def compare_profile(soft: ShadowField, hard: ShadowField, along, fixed: dict):
    """Rows ``(coord, soft, hard)`` at cell centers along one axis.

    ``fixed`` maps the other axes to world coordinates; an axis of size one
    may be omitted.
    """
    if soft.geometry != hard.geometry:
        raise ValueError("soft and hard fields have different geometry")
    geo = soft.geometry
    along = _axis(along)
    index = [slice(None)] * 3
    for a in range(3):
        if a == along:
            continue
        if a not in fixed:
            if geo.dims[a] != 1:
                raise ValueError(f"line does not fix axis {'xyz'[a]}")
            index[a] = 0
            continue
        i = int(np.floor((fixed[a] - geo.origin[a]) * geo.resolution + 0.5))
        if not 0 <= i < geo.dims[a]:
            raise ValueError(f"line at {'xyz'[a]}={fixed[a]} lies outside the field")
        index[a] = i
    s = soft.values[tuple(index)]
    h = hard.values[tuple(index)]
    coords = geo.origin[along] + np.arange(geo.dims[along]) / geo.resolution
    return [(float(c), float(sv), int(hv)) for c, sv, hv in zip(coords, s, h)]


def write_profile_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["coord", "soft", "hard"])
        for c, s, h in rows:
            w.writerow([repr(c), repr(s), h])
