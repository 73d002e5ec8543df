"""Visibility and orientation costs for the trajectory optimizer.

Quaternions are ``(w, x, y, z)`` arrays.  The camera looks along the body
+x axis; orientations are built from yaw-pitch-roll (Z-Y-X intrinsic).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EC_CLAMP = 1e-6
UNIT_TOL = 1e-8


@dataclass(frozen=True)
class BarrierParams:
    delta: float = 0.1
    weight: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.weight < 0.0:
            raise ValueError(f"weight must be nonnegative, got {self.weight}")


@dataclass(frozen=True)
class OrientationParams:
    alpha: float = 0.1
    beta: float = 1.0
    # epsilon > e keeps the cost decreasing in the error complement above 0.5
    epsilon: float = 10.0
    roll: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.beta == 0.0:
            raise ValueError("beta must be nonzero")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class Pose:
    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float)
        q = np.asarray(self.orientation, dtype=float)
        if p.shape != (3,) or q.shape != (4,):
            raise ValueError("pose needs a 3D position and a (w, x, y, z) quaternion")
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError(f"orientation is not a unit quaternion (norm {np.linalg.norm(q)})")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)


def relaxed_log_barrier(z, delta):
    """``-ln z`` above ``delta``, quadratic extension below; returns
    ``(value, derivative)``.  Vectorized, finite for every real ``z``."""
    z = np.asarray(z, dtype=float)
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    above = z >= delta
    zs = np.where(above, z, delta)
    r = (z - 2.0 * delta) / delta
    value = np.where(above, -np.log(zs), 0.5 * (r * r - 1.0) - np.log(delta))
    deriv = np.where(above, -1.0 / zs, (z - 2.0 * delta) / (delta * delta))
    if value.ndim == 0:
        return float(value), float(deriv)
    return value, deriv


def visibility_cost(field, x_ee, params: BarrierParams):
    """Weighted barrier on the sampled field value and its spatial gradient.

    ``x_ee`` may be one point or an ``(N, 3)`` array.
    """
    f = field.sample(x_ee)
    df = field.gradient(x_ee)
    value, dv = relaxed_log_barrier(f, params.delta)
    value = params.weight * value
    grad = params.weight * np.asarray(dv)[..., None] * df
    return value, grad


def quat_from_ypr(yaw, pitch, roll):
    yaw, pitch, roll = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (yaw, pitch, roll)))
    cy, sy = np.cos(yaw / 2), np.sin(yaw / 2)
    cp, sp = np.cos(pitch / 2), np.sin(pitch / 2)
    cr, sr = np.cos(roll / 2), np.sin(roll / 2)
    return np.stack([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ], axis=-1)


def quat_mul(a, b):
    aw, ax, ay, az = np.moveaxis(np.asarray(a, dtype=float), -1, 0)
    bw, bx, by, bz = np.moveaxis(np.asarray(b, dtype=float), -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def quat_conj(q):
    return np.asarray(q, dtype=float) * np.array([1.0, -1.0, -1.0, -1.0])


def quat_rotate(q, v):
    """Rotate vector(s) ``v`` by unit quaternion(s) ``q``."""
    v = np.asarray(v, dtype=float)
    qv = np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)
    return quat_mul(quat_mul(q, qv), quat_conj(q))[..., 1:]


def quat_exp(rotvec):
    """Unit quaternion for a rotation vector (axis * angle)."""
    rv = np.asarray(rotvec, dtype=float)
    angle = np.linalg.norm(rv, axis=-1, keepdims=True)
    half = angle / 2
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(angle > 1e-12, np.sin(half) / np.where(angle > 0, angle, 1.0), 0.5)
    return np.concatenate([np.cos(half), k * rv], axis=-1)


def look_angles(p_ee, p_light):
    """Yaw and pitch that point the body +x axis from ``p_ee`` at ``p_light``."""
    v = np.asarray(p_light, dtype=float) - np.asarray(p_ee, dtype=float)
    yaw = np.arctan2(v[..., 1], v[..., 0])
    pitch = -np.arctan2(v[..., 2], np.hypot(v[..., 0], v[..., 1]))
    return yaw, pitch


def desired_orientation(p_ee, p_light, roll: float = 0.0):
    v = np.asarray(p_light, dtype=float) - np.asarray(p_ee, dtype=float)
    if np.any(np.linalg.norm(v, axis=-1) < 1e-12):
        raise ValueError("end-effector and light positions coincide")
    yaw, pitch = look_angles(p_ee, p_light)
    return quat_from_ypr(yaw, pitch, roll)


def rotation_angle(q_a, q_b):
    """Geodesic angle in [0, pi] between two rotations (sign invariant)."""
    rel = quat_mul(quat_conj(q_a), q_b)
    return 2.0 * np.arctan2(np.linalg.norm(rel[..., 1:], axis=-1), np.abs(rel[..., 0]))


def quaternion_error_complement(q_current, q_desired, check: bool = True):
    """``1 - angle / pi``: 1 when aligned, 0 for opposite rotations."""
    if check:
        for q in (q_current, q_desired):
            n = np.linalg.norm(np.asarray(q, dtype=float), axis=-1)
            if np.any(np.abs(n - 1.0) > UNIT_TOL):
                raise ValueError("quaternion_error_complement needs unit quaternions")
    ec = 1.0 - rotation_angle(q_current, q_desired) / np.pi
    return float(ec) if np.ndim(ec) == 0 else ec


def gamma_scale(error_complement, params: OrientationParams):
    ec = np.clip(np.asarray(error_complement, dtype=float), EC_CLAMP, 1.0 - EC_CLAMP)
    logit = np.log(params.epsilon * ec / (1.0 - ec))
    g = np.maximum(params.alpha, logit) / params.beta
    return float(g) if g.ndim == 0 else g


def lock_cost(ec, params: OrientationParams):
    """Orientation-lock penalty as a function of the error complement."""
    ec = np.asarray(ec, dtype=float)
    return gamma_scale(ec, params) * (1.0 - ec) ** 2


def orientation_cost_ypr(p_ee, yaw, pitch, p_light, params: OrientationParams):
    """Vectorized lock cost for positions and yaw/pitch (roll from params)."""
    q = quat_from_ypr(yaw, pitch, params.roll)
    qd = desired_orientation(p_ee, p_light, params.roll)
    ec = quaternion_error_complement(q, qd, check=False)
    return lock_cost(ec, params), ec


def orientation_cost(pose: Pose, p_light, params: OrientationParams, h: float = 1e-6):
    """Lock cost of ``pose`` and its gradient with respect to a small body-frame
    rotation vector, by central differences."""

    def cost(q):
        qd = desired_orientation(pose.position, p_light, params.roll)
        return float(lock_cost(quaternion_error_complement(q, qd, check=False), params))

    value = cost(pose.orientation)
    grad = np.zeros(3)
    for i in range(3):
        d = np.zeros(3)
        d[i] = h
        plus = quat_mul(pose.orientation, quat_exp(d))
        minus = quat_mul(pose.orientation, quat_exp(-d))
        grad[i] = (cost(plus) - cost(minus)) / (2 * h)
    return value, grad
