"""Environment-independent angular weights for shadow-field propagation.

A cell at offset ``(x, y, z)`` from the light (first octant, light at the
lattice origin) receives light through its three faces that look back toward
the light.  The weights say how much of that light arrives from the
x-predecessor ``(x-1, y, z)``, the y-predecessor and the z-predecessor; they
are called ``w_r``, ``w_b``, ``w_g`` after the red/blue/gold neighbours.

Only the first octant is stored; any signed offset is resolved through its
componentwise absolute value.

Weights are normalized so that ``(w_r + w_b) + w_g`` evaluates to exactly
``1.0`` in floating point, which keeps an empty map at exactly 1.0 after
propagation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .occupancy import FormatError

WEIGHT_MAGIC = b"SFW1"
_WHEADER = struct.Struct("<4s3I")


class _LightCell:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "LIGHT_CELL"


LIGHT_CELL = _LightCell()
"""Returned by ``weights_at`` for the zero offset, which has no predecessors."""


def planar_weights(a, b):
    """Complementary-ratio weights for in-plane offsets ``(a, b)``.

    Returns ``(w_a, w_b)``: the share of light entering from the predecessor
    along the first axis and along the second axis.  Vectorized.  Offsets on
    an axis give the whole weight to that axis; ``(0, 0)`` gives ``(0, 0)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ang_m = np.arctan2(b, a)            # vertex nearest the light
    ang_a = np.arctan2(b, a + 1.0)      # vertex shifted along the first axis
    ang_b = np.arctan2(b + 1.0, a)      # vertex shifted along the second axis
    span = ang_b - ang_a
    with np.errstate(invalid="ignore", divide="ignore"):
        w_a = np.where(span > 0, (ang_b - ang_m) / span, 0.0)
    light = (a == 0) & (b == 0)
    w_a = np.where(light, 0.0, np.clip(w_a, 0.0, 1.0))
    w_b = np.where(light, 0.0, 1.0 - w_a)
    return w_a, w_b


def _plane_angles(vm, vx, vy, vz):
    def angle_to_plane(n):
        num = np.abs(np.einsum("...i,...i->...", vm, n))
        den = np.linalg.norm(vm, axis=-1) * np.linalg.norm(n, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(den > 0, num / den, 0.0)
        return np.arcsin(np.clip(s, 0.0, 1.0))

    a_xy = angle_to_plane(np.cross(vy, vx))
    a_xz = angle_to_plane(np.cross(vx, vz))
    a_yz = angle_to_plane(np.cross(vz, vy))
    return a_xy, a_xz, a_yz


def _exact_normalize(w_r, w_b):
    """Third weight chosen so that (w_r + w_b) + w_g == 1.0 exactly."""
    s = w_r + w_b
    over = s > 1.0
    w_b = np.where(over, 1.0 - w_r, w_b)
    w_g = np.maximum(1.0 - (w_r + w_b), 0.0)
    return w_b, w_g


@dataclass(frozen=True, eq=False)
class WeightCache3D:
    extents: tuple[int, int, int]
    w_r: np.ndarray
    w_b: np.ndarray
    w_g: np.ndarray

    @property
    def shape(self):
        return self.w_r.shape

    def stored_values(self) -> int:
        return 3 * self.w_r.size

    def covers(self, extents) -> bool:
        return all(int(e) <= c for e, c in zip(extents, self.extents))


@dataclass(frozen=True, eq=False)
class WeightCache2D:
    extents: tuple[int, int]
    w_x: np.ndarray
    w_y: np.ndarray

    def stored_values(self) -> int:
        return 2 * self.w_x.size

    def covers(self, extents) -> bool:
        return all(int(e) <= c for e, c in zip(extents, self.extents))

    def as_3d(self) -> WeightCache3D:
        """View as a one-slab 3D cache (no z-predecessor weight)."""
        w_r = self.w_x[:, :, None]
        w_b = self.w_y[:, :, None]
        return WeightCache3D((self.extents[0], self.extents[1], 0),
                             w_r, w_b, np.zeros_like(w_r))


def _check_extents(extents, n):
    ext = tuple(int(e) for e in extents)
    if len(ext) != n or any(e < 0 for e in ext):
        raise ValueError(f"extents must be {n} non-negative integers, got {extents}")
    return ext


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


@lru_cache(maxsize=16)
def init_weights_3d(extents) -> WeightCache3D:
    """Weights for every first-octant offset up to ``extents`` inclusive.

    Interior offsets follow the plane-angle construction: the angle between
    the vector to the cell's nearest vertex and each of the planes spanned by
    two shifted vertices; the x-predecessor takes the angle to the y-z plane
    and so on.  Offsets on a coordinate plane fall back to the planar rule on
    their two nonzero axes.
    """
    ex, ey, ez = _check_extents(extents, 3)
    x, y, z = np.meshgrid(np.arange(ex + 1, dtype=float), np.arange(ey + 1, dtype=float),
                          np.arange(ez + 1, dtype=float), indexing="ij")
    vm = np.stack([x, y, z], axis=-1)
    vx = vm + [1.0, 0.0, 0.0]
    vy = vm + [0.0, 1.0, 0.0]
    vz = vm + [0.0, 0.0, 1.0]
    a_xy, a_xz, a_yz = _plane_angles(vm, vx, vy, vz)
    a_sum = a_xy + a_xz + a_yz
    with np.errstate(invalid="ignore", divide="ignore"):
        w_r = np.where(a_sum > 0, a_yz / a_sum, 0.0)
        w_b = np.where(a_sum > 0, a_xz / a_sum, 0.0)

    # coordinate planes: planar rule on the surviving axes
    wa, wb = planar_weights(x, y)
    on = z == 0
    w_r = np.where(on, wa, w_r)
    w_b = np.where(on, wb, w_b)
    wa, wb = planar_weights(x, z)
    on = (y == 0) & (z > 0)
    w_r = np.where(on, wa, w_r)
    w_b = np.where(on, 0.0, w_b)
    wa, wb = planar_weights(y, z)
    on = (x == 0) & (y > 0) & (z > 0)
    w_r = np.where(on, 0.0, w_r)
    w_b = np.where(on, wa, w_b)

    w_b, w_g = _exact_normalize(w_r, w_b)
    w_g[0, 0, 0] = 0.0
    w_r = np.ascontiguousarray(w_r)
    w_b = np.ascontiguousarray(w_b)
    w_g = np.ascontiguousarray(w_g)
    _freeze(w_r, w_b, w_g)
    return WeightCache3D((ex, ey, ez), w_r, w_b, w_g)


@lru_cache(maxsize=16)
def init_weights_2d(extents) -> WeightCache2D:
    ex, ey = _check_extents(extents, 2)
    x, y = np.meshgrid(np.arange(ex + 1, dtype=float), np.arange(ey + 1, dtype=float),
                       indexing="ij")
    w_x, w_y = planar_weights(x, y)
    w_x = np.ascontiguousarray(w_x)
    w_y = np.ascontiguousarray(w_y)
    _freeze(w_x, w_y)
    return WeightCache2D((ex, ey), w_x, w_y)


def weights_at(cache, offset):
    """Weights for a signed offset, or ``LIGHT_CELL`` for the zero offset."""
    off = tuple(abs(int(o)) for o in offset)
    if isinstance(cache, WeightCache3D):
        if len(off) != 3:
            raise ValueError("3D cache needs a 3-component offset")
        arrays = (cache.w_r, cache.w_b, cache.w_g)
    else:
        if len(off) != 2:
            raise ValueError("2D cache needs a 2-component offset")
        arrays = (cache.w_x, cache.w_y)
    if not cache.covers(off):
        raise IndexError(f"offset {offset} beyond cache extents {cache.extents}")
    if not any(off):
        return LIGHT_CELL
    return tuple(float(a[off]) for a in arrays)


def save_weights(cache: WeightCache3D, path) -> None:
    trip = np.stack([cache.w_r.ravel(order="F"), cache.w_b.ravel(order="F"),
                     cache.w_g.ravel(order="F")], axis=1)
    Path(path).write_bytes(_WHEADER.pack(WEIGHT_MAGIC, *cache.extents)
                           + trip.astype("<f4").tobytes())


def load_weights(path) -> WeightCache3D:
    """Read an ``SFW1`` cache.  The gold weight is re-derived from the other
    two so normalization is exact again after the float32 round trip."""
    buf = Path(path).read_bytes()
    if len(buf) < _WHEADER.size:
        raise FormatError("weight file too short for header")
    magic, ex, ey, ez = _WHEADER.unpack_from(buf)
    if magic != WEIGHT_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {WEIGHT_MAGIC!r}")
    shape = (ex + 1, ey + 1, ez + 1)
    n = shape[0] * shape[1] * shape[2]
    if len(buf) != _WHEADER.size + 12 * n:
        raise FormatError(f"weight payload size mismatch for extents {(ex, ey, ez)}")
    trip = np.frombuffer(buf, dtype="<f4", offset=_WHEADER.size).reshape(n, 3).astype(float)
    w_r = trip[:, 0].reshape(shape, order="F").copy()
    w_b = trip[:, 1].reshape(shape, order="F").copy()
    w_b, w_g = _exact_normalize(w_r, w_b)
    w_g[0, 0, 0] = 0.0
    w_r, w_b, w_g = (np.ascontiguousarray(a) for a in (w_r, w_b, w_g))
    _freeze(w_r, w_b, w_g)
    return WeightCache3D((ex, ey, ez), w_r, w_b, w_g)
