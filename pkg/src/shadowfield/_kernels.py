"""Compiled inner loops: octant propagation and voxel traversal.

All kernels release the GIL so octants can be dispatched on threads.
Traversal works in lattice units where cell ``c`` spans ``[c, c + 1)`` along
each axis.
"""

import math

import numpy as np
from numba import njit

_TIE = 1e-12


@njit(cache=True, nogil=True)
def propagate_octant(F, occ, w_r, w_b, w_g, lx, ly, lz, sx, sy, sz,
                     x0, x1, y0, y1, z0, z1, threshold):
    """Fill one octant of ``F`` outward from the light cell ``(lx, ly, lz)``.

    Offsets run from ``x0..x1`` (inclusive) along the sign ``sx`` and so on;
    a start of 1 skips the seam plane owned by the nonnegative octant.
    """
    for i in range(x0, x1 + 1):
        x = lx + sx * i
        px = x - sx if i > 0 else x
        for j in range(y0, y1 + 1):
            y = ly + sy * j
            py = y - sy if j > 0 else y
            for k in range(z0, z1 + 1):
                z = lz + sz * k
                p = occ[x, y, z]
                if p > threshold:
                    F[x, y, z] = 1.0 - p
                elif i == 0 and j == 0 and k == 0:
                    F[x, y, z] = 1.0
                else:
                    pz = z - sz if k > 0 else z
                    F[x, y, z] = (w_r[i, j, k] * F[px, y, z]
                                  + w_b[i, j, k] * F[x, py, z]
                                  + w_g[i, j, k] * F[x, y, pz])


@njit(cache=True, nogil=True)
def _setup_axis(u0, d):
    c = math.floor(u0)
    if d < 0.0 and u0 == c:
        c -= 1
    if d > 0.0:
        step = 1
        t_max = (c + 1.0 - u0) / d
        t_delta = 1.0 / d
    elif d < 0.0:
        step = -1
        t_max = (c - u0) / d
        t_delta = -1.0 / d
    else:
        step = 0
        t_max = np.inf
        t_delta = np.inf
    return int(c), step, t_max, t_delta


@njit(cache=True, nogil=True)
def dda_cells(u0, u1):
    """All cells with positive-length intersection with segment ``u0 -> u1``.

    Exact corner/edge crossings step every tied axis at once, which makes the
    visited set independent of the traversal direction.
    """
    d0 = u1[0] - u0[0]
    d1 = u1[1] - u0[1]
    d2 = u1[2] - u0[2]
    cx, sx, tx, dx = _setup_axis(u0[0], d0)
    cy, sy, ty, dy = _setup_axis(u0[1], d1)
    cz, sz, tz, dz = _setup_axis(u0[2], d2)
    n_max = int(abs(d0) + abs(d1) + abs(d2)) + 4
    out = np.empty((n_max, 3), dtype=np.int64)
    n = 0
    while True:
        out[n, 0] = cx
        out[n, 1] = cy
        out[n, 2] = cz
        n += 1
        t = min(tx, min(ty, tz))
        if t >= 1.0 - _TIE or n >= n_max:
            break
        if tx <= t + _TIE:
            cx += sx
            tx += dx
        if ty <= t + _TIE:
            cy += sy
            ty += dy
        if tz <= t + _TIE:
            cz += sz
            tz += dz
    return out[:n]


@njit(cache=True, nogil=True)
def dda_blocker(u0, u1, occ, threshold):
    """Walk ``u0 -> u1`` over ``occ`` (cells outside it are free).

    Returns ``(blocked, bx, by, bz, n_cells)``; the first and last cells of
    the walk never block.
    """
    cells = dda_cells(u0, u1)
    n = cells.shape[0]
    nx, ny, nz = occ.shape
    for m in range(1, n - 1):
        x = cells[m, 0]
        y = cells[m, 1]
        z = cells[m, 2]
        if 0 <= x < nx and 0 <= y < ny and 0 <= z < nz:
            if occ[x, y, z] > threshold:
                return True, x, y, z, n
    return False, -1, -1, -1, n


@njit(cache=True, nogil=True)
def hard_field_kernel(occ, lx, ly, lz, threshold):
    """Binary visibility from the light cell center to every cell center."""
    nx, ny, nz = occ.shape
    out = np.empty((nx, ny, nz), dtype=np.float64)
    u0 = np.array([lx + 0.5, ly + 0.5, lz + 0.5])
    u1 = np.empty(3)
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                if occ[x, y, z] > threshold:
                    out[x, y, z] = 0.0
                    continue
                u1[0] = x + 0.5
                u1[1] = y + 0.5
                u1[2] = z + 0.5
                blocked, bx, by, bz, n = dda_blocker(u0, u1, occ, threshold)
                out[x, y, z] = 0.0 if blocked else 1.0
    return out
