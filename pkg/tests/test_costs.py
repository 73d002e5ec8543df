import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from shadowfield.costs import (BarrierParams, OrientationParams, Pose, desired_orientation,
                               gamma_scale, lock_cost, look_angles, orientation_cost,
                               quat_exp, quat_from_ypr, quat_mul, quat_rotate,
                               quaternion_error_complement, relaxed_log_barrier,
                               visibility_cost)
from shadowfield.field import ShadowField, update_shadow_field
from shadowfield.occupancy import GridGeometry, add_box, new_grid

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_barrier_at_one():
    assert relaxed_log_barrier(1.0, 0.1) == (0.0, -1.0)


def test_barrier_at_zero():
    v, _ = relaxed_log_barrier(0.0, 0.1)
    assert v == pytest.approx(3.802585, abs=1e-6)


@pytest.mark.parametrize("delta", [0.01, 0.1, 0.5, 0.9])
def test_barrier_c1_at_delta(delta):
    hi = relaxed_log_barrier(delta, delta)
    below_v = 0.5 * (((delta - 2 * delta) / delta) ** 2 - 1) - math.log(delta)
    below_d = (delta - 2 * delta) / delta ** 2
    assert abs(hi[0] - below_v) <= 1e-12
    assert abs(hi[1] - below_d) <= 1e-12
    eps = 1e-9
    lo = relaxed_log_barrier(delta - eps, delta)
    assert abs(lo[0] - hi[0]) <= 2 * eps / delta and abs(lo[1] - hi[1]) <= 2 * eps / delta**2


@given(finite)
def test_barrier_finite_and_decreasing(z):
    v, d = relaxed_log_barrier(z, 0.1)
    assert math.isfinite(v) and d < 0


def test_barrier_vectorized():
    v, d = relaxed_log_barrier(np.array([-1.0, 0.0, 0.05, 0.1, 0.5, 1.0]), 0.1)
    assert v.shape == d.shape == (6,)
    assert np.all(np.diff(v) < 0)


def test_barrier_rejects_bad_delta():
    with pytest.raises(ValueError):
        relaxed_log_barrier(0.5, 1.0)
    with pytest.raises(ValueError):
        BarrierParams(delta=0.0)


def _field_with_box():
    geo = GridGeometry((30, 30, 1), 10.0)
    g = new_grid(geo, 0.0)
    add_box(g, (1.2, 1.2, 0), (1.4, 1.6, 0), 1.0)
    return update_shadow_field(g, (0.5, 1.4, 0.0))


def test_visibility_cost_lit():
    f = _field_with_box()
    v, g = visibility_cost(f, np.array([0.3, 0.4, 0.0]), BarrierParams(0.1, 2.0))
    assert v == 0.0
    np.testing.assert_array_equal(g, 0.0)


def test_visibility_cost_inside_obstacle():
    f = _field_with_box()
    v, _ = visibility_cost(f, np.array([1.3, 1.4, 0.0]), BarrierParams(0.1, 2.0))
    assert v == pytest.approx(2.0 * (1.5 - math.log(0.1)))


def test_visibility_gradient_finite_differences():
    rng = np.random.default_rng(5)
    geo = GridGeometry((10, 9, 8), 10.0)
    f = ShadowField(geo, rng.uniform(0.0, 1.0, geo.dims), (0, 0, 0), (0, 0, 0))
    params = BarrierParams(0.1, 1.5)
    h = 1e-6
    n = 0
    while n < 100:
        u = rng.uniform(0, np.asarray(geo.dims) - 1)
        fr = u - np.floor(u)
        if np.any(np.minimum(fr, 1 - fr) < 0.1):
            continue
        p = u / geo.resolution
        _, g = visibility_cost(f, p, params)
        fd = np.array([(visibility_cost(f, p + h * e, params)[0]
                        - visibility_cost(f, p - h * e, params)[0]) / (2 * h) for e in np.eye(3)])
        assert np.linalg.norm(g - fd) <= 1e-6 * max(np.linalg.norm(fd), 1e-12)
        n += 1


def test_desired_orientation_axis_cases():
    np.testing.assert_allclose(desired_orientation((0, 0, 0), (1, 0, 0)), (1, 0, 0, 0), atol=1e-12)
    np.testing.assert_allclose(desired_orientation((0, 0, 0), (0, 1, 0)),
                               quat_from_ypr(math.pi / 2, 0, 0), atol=1e-12)
    np.testing.assert_allclose(desired_orientation((0, 0, 0), (0, 0, 1)),
                               quat_from_ypr(0, -math.pi / 2, 0), atol=1e-12)
    yaw, pitch = look_angles((0, 0, 0), (0, 0, 1))
    assert pitch == pytest.approx(-math.pi / 2)


def test_desired_orientation_coincident():
    with pytest.raises(ValueError):
        desired_orientation((1, 2, 3), (1, 2, 3))


def test_boresight_parallel_random():
    rng = np.random.default_rng(0)
    a = rng.uniform(-5, 5, (1000, 3))
    b = rng.uniform(-5, 5, (1000, 3))
    roll = rng.uniform(-np.pi, np.pi)
    q = desired_orientation(a, b, roll)
    axis = quat_rotate(q, np.array([1.0, 0, 0]))
    v = (b - a) / np.linalg.norm(b - a, axis=1, keepdims=True)
    assert np.max(np.linalg.norm(np.cross(axis, v), axis=1)) < 1e-9
    assert np.all(np.einsum("ij,ij->i", axis, v) > 0)


def test_error_complement_examples():
    q = quat_from_ypr(0.3, 0.2, 0.1)
    assert quaternion_error_complement(q, q) == pytest.approx(1.0)
    flip = quat_mul(q, quat_exp(np.array([0.0, 0.0, math.pi])))
    assert quaternion_error_complement(q, flip) == pytest.approx(0.0, abs=1e-12)
    quarter = quat_mul(q, quat_exp(np.array([math.pi / 2, 0.0, 0.0])))
    assert quaternion_error_complement(q, quarter) == pytest.approx(0.5)


@given(st.floats(-3, 3), st.floats(-1.5, 1.5), st.floats(-3, 3), st.floats(-3, 3))
def test_error_complement_sign_invariant(y1, p1, y2, p2):
    a = quat_from_ypr(y1, p1, 0.0)
    b = quat_from_ypr(y2, p2, 0.0)
    e = quaternion_error_complement(a, b)
    assert 0.0 <= e <= 1.0
    assert quaternion_error_complement(-a, b) == pytest.approx(e, abs=1e-12)


def test_error_complement_rejects_non_unit():
    with pytest.raises(ValueError):
        quaternion_error_complement(np.array([2.0, 0, 0, 0]), np.array([1.0, 0, 0, 0]))


def test_gamma_examples():
    p = OrientationParams(alpha=0.1, beta=2.0, epsilon=1.0)
    assert gamma_scale(0.5, p) == pytest.approx(0.05)
    assert gamma_scale(0.995, p) == pytest.approx(2.6467, abs=1e-4)
    assert gamma_scale(0.0, p) == pytest.approx(0.05)


@given(st.floats(0, 1), st.floats(0, 1))
def test_gamma_nondecreasing(a, b):
    p = OrientationParams()
    lo, hi = sorted((a, b))
    assert gamma_scale(lo, p) <= gamma_scale(hi, p)
    assert gamma_scale(lo, p) >= p.alpha / p.beta


def test_orientation_params_validation():
    for bad in [dict(alpha=0.0), dict(alpha=1.0), dict(beta=0.0), dict(epsilon=0.0)]:
        with pytest.raises(ValueError):
            OrientationParams(**bad)


def test_locked_pose_costs_zero():
    p_light = np.array([2.0, 1.0, 0.5])
    pos = np.array([0.0, 0.0, 0.0])
    pose = Pose(pos, desired_orientation(pos, p_light))
    v, g = orientation_cost(pose, p_light, OrientationParams())
    assert v == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(g, 0.0, atol=1e-6)


@given(st.floats(-3, 3), st.floats(-1.5, 1.5), st.floats(-3, 3))
def test_orientation_cost_nonnegative(yaw, pitch, roll):
    pose = Pose(np.zeros(3), quat_from_ypr(yaw, pitch, roll))
    v, _ = orientation_cost(pose, np.array([1.0, 2.0, 0.3]), OrientationParams())
    assert v >= 0.0


def test_yaw_sweep_decreases_toward_target():
    p_light = np.array([3.0, 0.0, 0.0])
    params = OrientationParams()
    errors = np.linspace(math.pi / 2 - 1e-3, 0.0, 200)
    costs = [orientation_cost(Pose(np.zeros(3), quat_from_ypr(e, 0, 0)), p_light, params)[0]
             for e in errors]
    assert np.all(np.diff(costs) < 0)


def test_small_epsilon_breaks_sweep_monotonicity():
    # with epsilon below e the lock cost rises again just under a quarter turn
    ec = np.linspace(0.5, 0.6, 50)
    c = lock_cost(ec, OrientationParams(epsilon=1.0))
    assert np.any(np.diff(c) > 0)


def test_orientation_gradient_direction():
    p_light = np.array([3.0, 0.0, 0.0])
    pose = Pose(np.zeros(3), quat_from_ypr(0.4, 0, 0))
    _, g = orientation_cost(pose, p_light, OrientationParams())
    # yaw error is positive about body z, so the gradient points that way
    assert g[2] > 0 and abs(g[0]) < 1e-6


def test_pose_validation():
    with pytest.raises(ValueError):
        Pose(np.zeros(3), np.array([1.0, 1.0, 0, 0]))
