"""Probabilistic occupancy grids: construction, synthetic scenes, log-odds
ingestion of point clouds and the ``SFG1`` binary format.

Cells are addressed cell-centered: the world point of cell ``(i, j, k)`` is
``origin + (i, j, k) / resolution`` and a world point maps to the cell whose
center is nearest.  Values are stored as ``float32`` so that persistence is
bit-exact; the array is shaped ``(n_x, n_y, n_z)``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LOGODDS_CLAMP = 10.0
GRID_MAGIC = b"SFG1"
_HEADER = struct.Struct("<4s3I4d")
# u32 dims are allowed up to this many cells in total before we call it an overflow
MAX_CELLS = 2**31 - 1


class FormatError(ValueError):
    """Raised when a grid, field or weight file cannot be parsed."""


@dataclass(frozen=True)
class GridGeometry:
    dims: tuple[int, int, int]
    resolution: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) == 2:
            dims = dims + (1,)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ValueError(f"grid dims must be three positive integers, got {self.dims}")
        res = float(self.resolution)
        if not (res > 0.0 and math.isfinite(res)):
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        origin = tuple(float(o) for o in self.origin)
        if len(origin) == 2:
            origin = origin + (0.0,)
        if len(origin) != 3:
            raise ValueError(f"origin must have three coordinates, got {self.origin}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "origin", origin)

    @property
    def n_cells(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def cell_size(self) -> float:
        return 1.0 / self.resolution

    @property
    def is_2d(self) -> bool:
        return self.dims[2] == 1

    def point3(self, p) -> np.ndarray:
        """Pad planar points with the grid's z level."""
        p = np.asarray(p, dtype=float)
        if p.shape[-1] == 2:
            z = np.full(p.shape[:-1] + (1,), self.origin[2])
            p = np.concatenate([p, z], axis=-1)
        if p.shape[-1] != 3:
            raise ValueError(f"expected 2D or 3D point(s), got shape {p.shape}")
        return p

    def world_to_index(self, p) -> np.ndarray:
        """Nearest cell index (may be out of bounds) for world point(s) ``p``."""
        p = self.point3(p)
        u = (p - np.asarray(self.origin)) * self.resolution
        return np.floor(u + 0.5).astype(np.int64)

    def index_to_world(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=float)
        return np.asarray(self.origin) + idx / self.resolution

    def contains_index(self, idx) -> bool:
        idx = np.asarray(idx)
        return bool(np.all(idx >= 0) and np.all(idx < np.asarray(self.dims)))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """World-space box covered by the cells (outer faces, not centers)."""
        lo = np.asarray(self.origin) - 0.5 / self.resolution
        hi = lo + np.asarray(self.dims) / self.resolution
        return lo, hi


@dataclass
class OccupancyGrid:
    geometry: GridGeometry
    values: np.ndarray
    log_odds: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.size != self.geometry.n_cells:
            raise ValueError(
                f"values hold {values.size} cells, geometry needs {self.geometry.n_cells}")
        self.values = values.reshape(self.geometry.dims)

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (self.geometry == other.geometry
                and np.array_equal(self.values, other.values))

    def copy(self) -> "OccupancyGrid":
        lo = None if self.log_odds is None else self.log_odds.copy()
        return OccupancyGrid(self.geometry, self.values.copy(), lo)

    def probability_at(self, idx) -> float:
        """Occupancy of cell ``idx``; cells outside the grid are free."""
        idx = tuple(int(i) for i in idx)
        if not self.geometry.contains_index(idx):
            return 0.0
        return float(self.values[idx])

    def query(self, p) -> float:
        return self.probability_at(self.geometry.world_to_index(p))

    def occupied_count(self, threshold: float = 0.5) -> int:
        return int(np.count_nonzero(self.values > threshold))

    def occupied_mask(self, threshold: float = 0.5) -> np.ndarray:
        return self.values > threshold


def _logit(p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        lo = np.log(p) - np.log1p(-p)
    return np.clip(lo, -LOGODDS_CLAMP, LOGODDS_CLAMP)


def _logistic(lo):
    return 1.0 / (1.0 + np.exp(-lo))


def new_grid(geometry: GridGeometry, fill: float = 0.0) -> OccupancyGrid:
    if not 0.0 <= fill <= 1.0:
        raise ValueError(f"fill must be a probability, got {fill}")
    values = np.full(geometry.dims, fill, dtype=np.float32)
    log_odds = np.full(geometry.dims, float(_logit(fill)))
    return OccupancyGrid(geometry, values, log_odds)


def add_box(grid: OccupancyGrid, min_corner, max_corner, p: float) -> OccupancyGrid:
    """Raise every cell whose center lies in the closed box to at least ``p``.

    Works in place and returns the grid.  Parts outside the grid are clipped.
    """
    geo = grid.geometry
    lo = geo.point3(min_corner)
    hi = geo.point3(max_corner)
    if lo.shape != (3,) or hi.shape != (3,):
        raise ValueError("box corners must be single points")
    if np.any(lo > hi):
        raise ValueError(f"box min {lo} exceeds max {hi}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be a probability, got {p}")
    u_lo = (lo - np.asarray(geo.origin)) * geo.resolution
    u_hi = (hi - np.asarray(geo.origin)) * geo.resolution
    # small slack so centers lying exactly on a face count as inside
    i0 = np.maximum(np.ceil(u_lo - 1e-9).astype(np.int64), 0)
    i1 = np.minimum(np.floor(u_hi + 1e-9).astype(np.int64), np.asarray(geo.dims) - 1)
    if np.any(i1 < i0):
        return grid
    sl = tuple(slice(a, b + 1) for a, b in zip(i0, i1))
    block = grid.values[sl]
    np.maximum(block, np.float32(p), out=block)
    if grid.log_odds is not None:
        grid.log_odds[sl] = _logit(grid.values[sl].astype(float))
    return grid


def ingest_points(grid: OccupancyGrid, points, hit_logodds: float = 0.85,
                  miss_logodds: float = -0.4, max_range: float = 30.0,
                  sensor_origin=(0.0, 0.0, 0.0)) -> OccupancyGrid:
    """Log-odds update from a batch of range returns, in place.

    Every endpoint within ``max_range`` adds ``hit_logodds`` to its cell; every
    other cell crossed by the beam adds ``miss_logodds``.  Beams to points
    beyond ``max_range`` carve free space up to ``max_range`` only.  Updates
    are accumulated as per-cell counts and applied once, so the result does not
    depend on point order.
    """
    from .oracle import traverse_cells

    if not hit_logodds > 0.0 > miss_logodds:
        raise ValueError("need hit_logodds > 0 > miss_logodds")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        return grid
    geo = grid.geometry
    if grid.log_odds is None:
        grid.log_odds = _logit(grid.values.astype(float))
    origin = np.asarray(sensor_origin, dtype=float)
    dims = np.asarray(geo.dims)
    hits = np.zeros(geo.dims, dtype=np.int64)
    misses = np.zeros(geo.dims, dtype=np.int64)

    for q in pts:
        d = q - origin
        dist = float(np.linalg.norm(d))
        in_range = dist <= max_range
        end = q if in_range else origin + d * (max_range / dist)
        cells = traverse_cells(geo, origin, end)
        end_cell = geo.world_to_index(end)
        if in_range:
            cells = [c for c in cells if tuple(c) != tuple(end_cell)]
            if geo.contains_index(end_cell):
                hits[tuple(end_cell)] += 1
        for c in cells:
            if np.all(c >= 0) and np.all(c < dims):
                misses[tuple(c)] += 1

    touched = (hits > 0) | (misses > 0)
    lo = grid.log_odds + hits * hit_logodds + misses * miss_logodds
    lo = np.clip(lo, -LOGODDS_CLAMP, LOGODDS_CLAMP)
    grid.log_odds = np.where(touched, lo, grid.log_odds)
    grid.values[touched] = _logistic(grid.log_odds[touched]).astype(np.float32)
    return grid


def read_points(path) -> np.ndarray:
    """Parse an ASCII ``x y z`` point file; ``#`` lines and blank lines skipped."""
    pts = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 'x y z', got {s!r}")
            try:
                xyz = [float(v) for v in parts]
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric coordinate in {s!r}") from None
            if not all(math.isfinite(v) for v in xyz):
                raise FormatError(f"{path}:{lineno}: non-finite coordinate in {s!r}")
            pts.append(xyz)
    return np.asarray(pts, dtype=float).reshape(-1, 3)


def pack_header(magic: bytes, geometry: GridGeometry) -> bytes:
    return _HEADER.pack(magic, *geometry.dims, geometry.resolution, *geometry.origin)


def unpack_header(buf: bytes, magic: bytes) -> tuple[GridGeometry, int]:
    """Parse the shared grid/field header; returns geometry and bytes consumed."""
    if len(buf) < _HEADER.size:
        raise FormatError("file too short for header")
    got, nx, ny, nz, res, ox, oy, oz = _HEADER.unpack_from(buf)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    if nx * ny * nz > MAX_CELLS:
        raise FormatError(f"dimensions {nx}x{ny}x{nz} overflow the cell limit")
    try:
        geo = GridGeometry((nx, ny, nz), res, (ox, oy, oz))
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    return geo, _HEADER.size


def read_payload(buf: bytes, offset: int, geometry: GridGeometry) -> np.ndarray:
    n = geometry.n_cells
    need = offset + 4 * n
    if len(buf) < need:
        raise FormatError(f"payload truncated: {len(buf) - offset} bytes for {n} cells")
    if len(buf) > need:
        raise FormatError(f"{len(buf) - need} trailing bytes after payload")
    flat = np.frombuffer(buf, dtype="<f4", count=n, offset=offset)
    return flat.reshape(geometry.dims, order="F").astype(np.float32)


def payload_bytes(values: np.ndarray) -> bytes:
    return np.asarray(values, dtype="<f4").ravel(order="F").tobytes()


def save_grid(grid: OccupancyGrid, path) -> None:
    Path(path).write_bytes(pack_header(GRID_MAGIC, grid.geometry) + payload_bytes(grid.values))


def load_grid(path) -> OccupancyGrid:
    buf = Path(path).read_bytes()
    geo, off = unpack_header(buf, GRID_MAGIC)
    values = read_payload(buf, off, geo)
    if np.any(~np.isfinite(values)) or np.any(values < 0) or np.any(values > 1):
        raise FormatError("grid payload holds values outside [0, 1]")
    return OccupancyGrid(geo, values)
