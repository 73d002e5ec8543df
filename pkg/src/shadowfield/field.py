"""Shadow field: per-cell probability of an unobstructed line of sight to a
point light, propagated layer by layer outward from the light.

The field is a local window of the occupancy lattice centered on the light
cell.  Each octant is filled outward; a free cell takes the weighted mix of
its three predecessors (one step toward the light per axis), an occupied cell
(probability above the threshold) takes ``1 - P_O``.  Cells on the planes
through the light are owned by the octant with nonnegative signs, so octants
are processed in four dependency groups (0, 1, 2 and 3 negative signs); the
octants inside a group touch disjoint cells and may run on separate threads.
"""

from __future__ import annotations

import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np

from . import _kernels
from .occupancy import (FormatError, GridGeometry, OccupancyGrid, pack_header,
                        payload_bytes, read_payload, unpack_header)
from .weights import WeightCache2D, WeightCache3D, init_weights_2d, init_weights_3d

FIELD_MAGIC = b"SFF1"
_LIGHT = struct.Struct("<6Id")
DEFAULT_THRESHOLD = 0.5

_OCTANT_GROUPS = [
    [s for s in product((1, -1), repeat=3) if sum(v < 0 for v in s) == n]
    for n in range(4)
]
_executor = None
_executor_size = 0


def thread_count() -> int:
    env = os.environ.get("SHADOWFIELD_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"SHADOWFIELD_THREADS must be an integer, got {env!r}") from None
        return max(1, n)
    return os.cpu_count() or 1


def _pool(n):
    global _executor, _executor_size
    if _executor is None or _executor_size != n:
        if _executor is not None:
            _executor.shutdown(wait=True)
        _executor = ThreadPoolExecutor(max_workers=n, thread_name_prefix="octant")
        _executor_size = n
    return _executor


@dataclass(frozen=True)
class FieldSlice:
    values: np.ndarray          # (n_u, n_v): columns u, rows v
    geometry: GridGeometry      # dims (n_u, n_v, 1)
    axis: int
    index: int
    level: float


@dataclass(frozen=True, eq=False)
class ShadowField:
    geometry: GridGeometry
    values: np.ndarray
    light_local: tuple[int, int, int]
    light_global: tuple[int, int, int]
    threshold: float = DEFAULT_THRESHOLD
    light_world: tuple[float, float, float] | None = None

    @property
    def extents_pos(self) -> tuple[int, int, int]:
        return tuple(int(n - 1 - l) for n, l in zip(self.geometry.dims, self.light_local))

    @property
    def extents_neg(self) -> tuple[int, int, int]:
        return tuple(int(l) for l in self.light_local)

    def _continuous_index(self, p):
        p = self.geometry.point3(p)
        return (p - np.asarray(self.geometry.origin)) * self.geometry.resolution

    def _stencil(self, p):
        """Lower corner index, fractional offsets and in-range mask per axis."""
        u = np.atleast_2d(self._continuous_index(p))
        dims = np.asarray(self.geometry.dims)
        hi = dims - 1
        uc = np.clip(u, 0.0, hi)
        i0 = np.minimum(np.floor(uc).astype(np.int64), np.maximum(hi - 1, 0))
        t = uc - i0
        i1 = np.minimum(i0 + 1, hi)
        inside = (u >= 0.0) & (u <= hi) & (dims > 1)
        return i0, i1, t, inside

    def sample(self, p):
        """Trilinear interpolation of cell-centered values, clamped at the
        boundary.  Accepts one point or an ``(N, 3)`` array."""
        single = np.ndim(p) == 1
        i0, i1, t, _ = self._stencil(p)
        v = self.values
        tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]
        out = np.zeros(len(t))
        for cx, wx in ((i0[:, 0], 1 - tx), (i1[:, 0], tx)):
            for cy, wy in ((i0[:, 1], 1 - ty), (i1[:, 1], ty)):
                for cz, wz in ((i0[:, 2], 1 - tz), (i1[:, 2], tz)):
                    out += wx * wy * wz * v[cx, cy, cz]
        return float(out[0]) if single else out

    def gradient(self, p):
        """Analytic gradient of the interpolant in 1/m; zero along any axis
        where the point lies outside the cell-center range."""
        single = np.ndim(p) == 1
        i0, i1, t, inside = self._stencil(p)
        v = self.values
        tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]
        x0, y0, z0 = i0.T
        x1, y1, z1 = i1.T
        g = np.zeros((len(t), 3))
        # difference first so a uniform field gives exactly zero
        for cy, wy in ((y0, 1 - ty), (y1, ty)):
            for cz, wz in ((z0, 1 - tz), (z1, tz)):
                g[:, 0] += wy * wz * (v[x1, cy, cz] - v[x0, cy, cz])
        for cx, wx in ((x0, 1 - tx), (x1, tx)):
            for cz, wz in ((z0, 1 - tz), (z1, tz)):
                g[:, 1] += wx * wz * (v[cx, y1, cz] - v[cx, y0, cz])
        for cx, wx in ((x0, 1 - tx), (x1, tx)):
            for cy, wy in ((y0, 1 - ty), (y1, ty)):
                g[:, 2] += wx * wy * (v[cx, cy, z1] - v[cx, cy, z0])
        g *= self.geometry.resolution
        g[~inside] = 0.0
        return g[0] if single else g

    def slice(self, axis, world_level: float) -> FieldSlice:
        """Plane of cells nearest ``world_level`` along ``axis`` (0/1/2 or x/y/z)."""
        a = _axis(axis)
        geo = self.geometry
        idx = int(np.floor((world_level - geo.origin[a]) * geo.resolution + 0.5))
        if not 0 <= idx < geo.dims[a]:
            raise ValueError(f"level {world_level} outside field along axis {'xyz'[a]}")
        rest = [b for b in range(3) if b != a]
        values = np.take(self.values, idx, axis=a).copy()
        g2 = GridGeometry((geo.dims[rest[0]], geo.dims[rest[1]], 1), geo.resolution,
                          (geo.origin[rest[0]], geo.origin[rest[1]],
                           geo.origin[a] + idx / geo.resolution))
        return FieldSlice(values, g2, a, idx, float(world_level))

    def cell_centers(self) -> np.ndarray:
        geo = self.geometry
        axes = [geo.origin[a] + np.arange(geo.dims[a]) / geo.resolution for a in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _axis(axis) -> int:
    if isinstance(axis, str):
        if axis.lower() not in ("x", "y", "z"):
            raise ValueError(f"axis must be x, y or z, got {axis!r}")
        return "xyz".index(axis.lower())
    a = int(axis)
    if a not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1 or 2, got {axis}")
    return a


def resolve_extents(occ_geometry: GridGeometry, light_index, extents):
    """Normalize ``extents`` to ``(positive, negative)`` cell-count triples.

    ``None`` covers the whole occupancy grid; an int is a cube radius; a
    triple is symmetric; a pair of triples is ``(pos, neg)``.
    """
    dims = occ_geometry.dims
    if extents is None:
        pos = tuple(int(n - 1 - l) for n, l in zip(dims, light_index))
        neg = tuple(int(l) for l in light_index)
        return pos, neg
    if np.isscalar(extents):
        r = int(extents)
        pos = neg = (r, r, r)
    else:
        ext = list(extents)
        if len(ext) == 2 and not np.isscalar(ext[0]):
            pos, neg = tuple(int(e) for e in ext[0]), tuple(int(e) for e in ext[1])
        else:
            pos = neg = tuple(int(e) for e in ext)
    if len(pos) == 2:
        pos, neg = pos + (0,), neg + (0,)
    if len(pos) != 3 or len(neg) != 3 or min(pos + neg) < 0:
        raise ValueError(f"invalid extents {extents}")
    if occ_geometry.is_2d:
        pos, neg = (pos[0], pos[1], 0), (neg[0], neg[1], 0)
    return pos, neg


def _local_occupancy(occ: OccupancyGrid, start, dims) -> np.ndarray:
    """Occupancy over the field window; cells outside the global grid read 0."""
    local = np.zeros(dims, dtype=np.float32)
    gdims = occ.geometry.dims
    src, dst = [], []
    for a in range(3):
        lo = max(start[a], 0)
        hi = min(start[a] + dims[a], gdims[a])
        if hi <= lo:
            return local
        src.append(slice(lo, hi))
        dst.append(slice(lo - start[a], hi - start[a]))
    local[tuple(dst)] = occ.values[tuple(src)]
    return local


def _propagate(values, occ_local, cache: WeightCache3D, light, pos, neg, threshold, threads):
    w_r, w_b, w_g = cache.w_r, cache.w_b, cache.w_g
    lx, ly, lz = light

    def run(signs):
        sx, sy, sz = signs
        lim = [pos[a] if signs[a] > 0 else neg[a] for a in range(3)]
        start = [0 if s > 0 else 1 for s in signs]
        if any(s > l for s, l in zip(start, lim)):
            return
        _kernels.propagate_octant(values, occ_local, w_r, w_b, w_g, lx, ly, lz,
                                  sx, sy, sz, start[0], lim[0], start[1], lim[1],
                                  start[2], lim[2], threshold)

    for group in _OCTANT_GROUPS:
        if threads > 1 and len(group) > 1:
            list(_pool(min(threads, len(group))).map(run, group))
        else:
            for signs in group:
                run(signs)


def _prepare(occ: OccupancyGrid, light_world, extents):
    geo = occ.geometry
    lg = tuple(int(v) for v in geo.world_to_index(light_world))
    if not geo.contains_index(lg):
        raise ValueError(f"light {tuple(light_world)} lies outside the occupancy grid")
    pos, neg = resolve_extents(geo, lg, extents)
    dims = tuple(p + n + 1 for p, n in zip(pos, neg))
    start = tuple(l - n for l, n in zip(lg, neg))
    fgeo = GridGeometry(dims, geo.resolution, tuple(geo.index_to_world(start)))
    return lg, pos, neg, dims, start, fgeo


def update_shadow_field(occ: OccupancyGrid, light_world, extents=None,
                        threshold: float = DEFAULT_THRESHOLD,
                        cache: WeightCache3D | None = None,
                        threads: int | None = None) -> ShadowField:
    """Compute a fresh 3D shadow field around ``light_world``."""
    lg, pos, neg, dims, start, fgeo = _prepare(occ, light_world, extents)
    need = tuple(max(p, n) for p, n in zip(pos, neg))
    if cache is None:
        cache = init_weights_3d(need)
    elif not cache.covers(need):
        raise ValueError(f"extents {need} exceed weight cache {cache.extents}")
    values = np.ones(dims, dtype=np.float64)
    occ_local = _local_occupancy(occ, start, dims)
    _propagate(values, occ_local, cache, neg, pos, neg, float(threshold),
               thread_count() if threads is None else int(threads))
    return ShadowField(fgeo, values, tuple(neg), lg, float(threshold),
                       tuple(float(v) for v in occ.geometry.point3(light_world)))


def update_shadow_field_2d(occ: OccupancyGrid, light_world, extents=None,
                           threshold: float = DEFAULT_THRESHOLD,
                           cache: WeightCache2D | None = None) -> ShadowField:
    """Planar field over a one-slab grid using the two-predecessor weights."""
    if not occ.geometry.is_2d:
        raise ValueError("update_shadow_field_2d needs a grid with n_z == 1")
    light = occ.geometry.point3(light_world)
    lg, pos, neg, dims, start, fgeo = _prepare(occ, light, extents)
    need = (max(pos[0], neg[0]), max(pos[1], neg[1]))
    if cache is None:
        cache = init_weights_2d(need)
    elif not cache.covers(need):
        raise ValueError(f"extents {need} exceed weight cache {cache.extents}")
    values = np.ones(dims, dtype=np.float64)
    occ_local = _local_occupancy(occ, start, dims)
    _propagate(values, occ_local, cache.as_3d(), neg, pos, neg, float(threshold), 1)
    return ShadowField(fgeo, values, tuple(neg), lg, float(threshold),
                       tuple(float(v) for v in light))


def storage_accounting(field: ShadowField, cache: WeightCache3D) -> dict:
    """Value counts for the field plus the three weight maps.

    The weight maps are stored for one octant only; ``weights_expanded`` is
    what they would occupy laid out over the whole field.
    """
    n = field.values.size
    expanded = 3 * n
    stored = cache.stored_values()
    return {
        "field_values": n,
        "weights_stored": stored,
        "weights_expanded": expanded,
        "total_expanded": n + expanded,
        "total_stored": n + stored,
        "reduction": 1.0 - (n + stored) / (n + expanded),
    }


def save_field(field: ShadowField, path) -> None:
    head = pack_header(FIELD_MAGIC, field.geometry)
    light = _LIGHT.pack(*field.light_local, *field.light_global, field.threshold)
    Path(path).write_bytes(head + light + payload_bytes(field.values))


def load_field(path) -> ShadowField:
    buf = Path(path).read_bytes()
    geo, off = unpack_header(buf, FIELD_MAGIC)
    if len(buf) < off + _LIGHT.size:
        raise FormatError("field file too short for light block")
    *idx, threshold = _LIGHT.unpack_from(buf, off)
    local, glob = tuple(idx[:3]), tuple(idx[3:])
    if not geo.contains_index(local):
        raise FormatError(f"light index {local} outside field dims {geo.dims}")
    values = read_payload(buf, off + _LIGHT.size, geo).astype(np.float64)
    light_world = tuple(float(v) for v in geo.index_to_world(local))
    return ShadowField(geo, values, local, glob, float(threshold), light_world)


def pgm_bytes(values2d: np.ndarray, comments=()) -> bytes:
    """Binary PGM; columns follow the first axis, rows the second (top row is
    index 0)."""
    v = np.clip(np.asarray(values2d, dtype=float), 0.0, 1.0)
    img = np.floor(255.0 * v + 0.5).astype(np.uint8).T   # rows = second axis
    h, w = img.shape
    head = "P5\n" + "".join(f"# {c}\n" for c in comments) + f"{w} {h}\n255\n"
    return head.encode("ascii") + np.ascontiguousarray(img).tobytes()


def write_pgm(path, values2d, comments=()) -> None:
    Path(path).write_bytes(pgm_bytes(values2d, comments))


def read_pgm(path) -> np.ndarray:
    """Inverse of ``write_pgm``: returns the ``(n_u, n_v)`` uint8 array."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    pos += 1
    if tokens[0] != b"P5":
        raise FormatError("not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}")
    img = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos).reshape(h, w)
    return img.T.copy()
