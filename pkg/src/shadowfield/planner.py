"""Receding-horizon trajectory optimization on a kinematic end-effector.

State ``[x, y, z, yaw, pitch]`` driven by velocity controls (single
integrator, explicit Euler).  The per-step cost is input effort plus the
visibility barrier on the shadow field plus the orientation lock, all scaled
by ``dt``, with an optional quadratic goal term on the final position.  The
optimizer is projected gradient descent with a Barzilai-Borwein trial step
and Armijo backtracking; the gradient is computed by an adjoint sweep.

The planner reads visibility only through a :class:`~shadowfield.field.ShadowField`.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .costs import look_angles, orientation_cost_ypr, relaxed_log_barrier
from .scenario import Scenario

log = logging.getLogger(__name__)

STATE_DIM = 5
FD_STEP = 1e-6
ARMIJO_SIGMA = 1e-4
MAX_BACKTRACK = 30


class SolverError(RuntimeError):
    """The optimizer hit a non-finite cost."""


class ControlBoundError(ValueError):
    pass


@dataclass
class KinematicModel:
    """Single integrator.  ``ee_jacobian`` maps state to end-effector
    position; the identity on the first three coordinates by default."""

    dt: float
    ee_jacobian: Callable[[np.ndarray], np.ndarray] | None = None

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return x + self.dt * u

    def ee_position(self, states: np.ndarray) -> np.ndarray:
        if self.ee_jacobian is None:
            return states[..., :3]
        return self.ee_jacobian(states)


@dataclass
class Trajectory:
    states: np.ndarray           # (N + 1, 5)
    controls: np.ndarray         # (N, 5)
    breakdown: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.states) != len(self.controls) + 1:
            raise ValueError("trajectory needs one more state than controls")

    @property
    def cost(self) -> float:
        return self.breakdown.get("total", float("nan"))


def check_bounds(scenario: Scenario, controls: np.ndarray, tol: float = 1e-9) -> None:
    controls = np.asarray(controls, dtype=float)
    if controls.ndim != 2 or controls.shape[1] != STATE_DIM:
        raise ValueError(f"controls must be shaped (N, {STATE_DIM}), got {controls.shape}")
    if not np.all(np.isfinite(controls)):
        raise ControlBoundError("controls must be finite")
    speed = np.linalg.norm(controls[:, :3], axis=1)
    if np.any(speed > scenario.max_speed * (1 + tol)):
        k = int(np.argmax(speed))
        raise ControlBoundError(f"step {k}: speed {speed[k]:.6g} m/s exceeds {scenario.max_speed}")
    rate = np.abs(controls[:, 3:])
    if np.any(rate > scenario.max_angular_rate * (1 + tol)):
        k = int(np.argmax(rate.max(axis=1)))
        raise ControlBoundError(f"step {k}: angular rate exceeds {scenario.max_angular_rate} rad/s")


def project(scenario: Scenario, controls: np.ndarray) -> np.ndarray:
    """Clamp linear speed by norm and angular rates per component."""
    u = np.array(controls, dtype=float)
    speed = np.linalg.norm(u[:, :3], axis=1, keepdims=True)
    scale = np.minimum(1.0, scenario.max_speed / np.maximum(speed, 1e-300))
    u[:, :3] *= scale
    np.clip(u[:, 3:], -scenario.max_angular_rate, scenario.max_angular_rate, out=u[:, 3:])
    return u


def rollout(scenario: Scenario, x0, controls) -> Trajectory:
    controls = np.asarray(controls, dtype=float)
    check_bounds(scenario, controls)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (STATE_DIM,):
        raise ValueError(f"state must have {STATE_DIM} entries")
    model = KinematicModel(scenario.dt)
    states = np.empty((len(controls) + 1, STATE_DIM))
    states[0] = x0
    for k, u in enumerate(controls):
        states[k + 1] = model.step(states[k], u)
    return Trajectory(states, controls.copy())


def _state_costs(scenario: Scenario, field, states: np.ndarray):
    """Visibility and orientation cost per state (unscaled by dt)."""
    pos = states[:, :3]
    f = field.sample(pos)
    vis, _ = relaxed_log_barrier(f, scenario.barrier.delta)
    vis = scenario.visibility_weight * np.atleast_1d(vis)
    ori, ec = orientation_cost_ypr(pos, states[:, 3], states[:, 4], scenario.light,
                                   scenario.orientation)
    ori = scenario.orientation_weight * np.atleast_1d(ori)
    return vis, ori, f, ec


def _goal_cost(scenario: Scenario, final_state: np.ndarray) -> float:
    if scenario.goal_weight == 0.0 or scenario.goal_position is None:
        return 0.0
    d = final_state[:3] - scenario.goal_position
    return float(scenario.goal_weight * d @ d)


def total_cost(traj: Trajectory, scenario: Scenario, field) -> dict:
    """Cost of a trajectory with its per-term breakdown (also stored on it)."""
    dt = scenario.dt
    later = traj.states[1:]
    vis, ori, f, ec = _state_costs(scenario, field, later)
    r = scenario.control_weights
    inp = float(np.sum(traj.controls ** 2 @ r) * dt)
    parts = {
        "input": inp,
        "visibility": float(np.sum(vis) * dt),
        "orientation": float(np.sum(ori) * dt),
        "goal": _goal_cost(scenario, traj.states[-1]),
    }
    parts["total"] = parts["input"] + parts["visibility"] + parts["orientation"] + parts["goal"]
    traj.breakdown = parts
    return parts


def _orientation_gradient(scenario: Scenario, states: np.ndarray) -> np.ndarray:
    """Central differences of the orientation cost over all five state
    coordinates, evaluated in one batch."""
    n = len(states)
    eye = np.eye(STATE_DIM) * FD_STEP
    probe = np.concatenate([states[None] + eye[:, None], states[None] - eye[:, None]])
    probe = probe.reshape(-1, STATE_DIM)
    c, _ = orientation_cost_ypr(probe[:, :3], probe[:, 3], probe[:, 4], scenario.light,
                                scenario.orientation)
    c = np.asarray(c).reshape(2, STATE_DIM, n)
    return scenario.orientation_weight * ((c[0] - c[1]) / (2 * FD_STEP)).T


def cost_and_gradient(scenario: Scenario, field, x0, controls):
    """Total cost and its gradient with respect to every control."""
    traj = rollout(scenario, x0, controls)
    parts = total_cost(traj, scenario, field)
    dt = scenario.dt
    later = traj.states[1:]
    pos = later[:, :3]

    # d(cost at state k)/d(state k)
    g_state = np.zeros_like(later)
    f = field.sample(pos)
    _, dvis = relaxed_log_barrier(f, scenario.barrier.delta)
    g_state[:, :3] = scenario.visibility_weight * np.atleast_1d(dvis)[:, None] * field.gradient(pos)
    if scenario.orientation_weight > 0:
        g_state += _orientation_gradient(scenario, later)
    g_state *= dt
    if scenario.goal_weight > 0 and scenario.goal_position is not None:
        g_state[-1, :3] += 2 * scenario.goal_weight * (later[-1, :3] - scenario.goal_position)

    # state k+1 depends on u_j (j <= k) through dt * I
    adjoint = np.cumsum(g_state[::-1], axis=0)[::-1]
    grad = 2 * traj.controls * scenario.control_weights * dt + dt * adjoint
    return parts["total"], grad, traj


@dataclass
class SolveInfo:
    iterations: int
    reason: str
    costs: list


def solve(scenario: Scenario, field, x0=None, warm_start=None,
          max_iter: int | None = None) -> tuple[Trajectory, SolveInfo]:
    """Projected gradient descent with Armijo backtracking.

    Never returns a trajectory costlier than the (projected) warm start.
    """
    x0 = scenario.start_state if x0 is None else np.asarray(x0, dtype=float)
    max_iter = scenario.max_iter if max_iter is None else max_iter
    n = scenario.horizon_steps
    u = np.zeros((n, STATE_DIM)) if warm_start is None else project(scenario, warm_start)
    if u.shape != (n, STATE_DIM):
        raise ValueError(f"warm start must be shaped ({n}, {STATE_DIM})")

    cost, grad, traj = cost_and_gradient(scenario, field, x0, u)
    if not np.isfinite(cost):
        raise SolverError("non-finite cost at the warm start")
    costs = [cost]
    step = 1.0
    prev_u = prev_g = None
    reason = "iteration cap"
    it = 0
    for it in range(1, max_iter + 1):
        pg = u - project(scenario, u - grad)
        if np.linalg.norm(pg) < 1e-6:
            reason = "gradient norm"
            it -= 1
            break
        if prev_u is not None:
            s = (u - prev_u).ravel()
            y = (grad - prev_g).ravel()
            sy = s @ y
            if sy > 1e-16:
                step = float(np.clip(s @ s / sy, 1e-8, 1e4))
        t = step
        accepted = False
        for _ in range(MAX_BACKTRACK):
            cand = project(scenario, u - t * grad)
            c_cost, c_grad, c_traj = cost_and_gradient(scenario, field, x0, cand)
            if not np.isfinite(c_cost):
                raise SolverError(f"non-finite cost at iteration {it}")
            if c_cost <= cost + ARMIJO_SIGMA * np.sum(grad * (cand - u)):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            reason = "line search stalled"
            it -= 1
            break
        decrease = cost - c_cost
        prev_u, prev_g = u, grad
        u, grad, cost, traj = cand, c_grad, c_cost, c_traj
        costs.append(cost)
        if decrease < 1e-9:
            reason = "cost decrease"
            break
    return traj, SolveInfo(it, reason, costs)


@dataclass
class StepLog:
    step: int
    state: np.ndarray
    F: float
    ec: float
    cost_total: float
    cost_vis: float
    cost_orient: float
    cost_input: float


@dataclass
class RecedingHorizonResult:
    executed: Trajectory
    logs: list[StepLog]


def receding_horizon(scenario: Scenario, field_provider, steps: int | None = None,
                     callback=None) -> RecedingHorizonResult:
    """Solve, apply the first control, shift the warm start, repeat.

    ``field_provider(step, state)`` returns the field snapshot to plan on.
    """
    steps = scenario.rh_steps if steps is None else steps
    x = scenario.start_state.copy()
    warm = None
    states = [x.copy()]
    applied = []
    logs = []
    model = KinematicModel(scenario.dt)

    def log_state(k, state, field, parts):
        f = float(field.sample(state[:3]))
        _, ec = orientation_cost_ypr(state[:3], state[3], state[4], scenario.light,
                                     scenario.orientation)
        logs.append(StepLog(k, state.copy(), f, float(ec), parts["total"],
                            parts["visibility"], parts["orientation"], parts["input"]))

    field = field_provider(0, x)
    zero = np.zeros((scenario.horizon_steps, STATE_DIM))
    log_state(0, x, field, total_cost(rollout(scenario, x, zero), scenario, field))
    for k in range(steps):
        traj, info = solve(scenario, field, x, warm)
        u0 = traj.controls[0]
        x = model.step(x, u0)
        applied.append(u0)
        states.append(x.copy())
        warm = np.vstack([traj.controls[1:], traj.controls[-1:]])
        field = field_provider(k + 1, x)
        log_state(k + 1, x, field, traj.breakdown)
        if callback is not None:
            callback(k, traj, info)
    controls = np.asarray(applied).reshape(-1, STATE_DIM)
    return RecedingHorizonResult(Trajectory(np.asarray(states), controls), logs)


LOG_HEADER = ["step", "x", "y", "z", "yaw", "pitch", "F", "ec",
              "cost_total", "cost_vis", "cost_orient", "cost_input"]


def write_log_csv(logs, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_HEADER)
        for e in logs:
            w.writerow([e.step, *(repr(float(v)) for v in e.state),
                        repr(e.F), repr(e.ec), repr(e.cost_total), repr(e.cost_vis),
                        repr(e.cost_orient), repr(e.cost_input)])


def write_trajectory_csv(traj: Trajectory, dt: float, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "z", "yaw", "pitch", "vx", "vy", "vz", "wyaw", "wpitch"])
        for k, s in enumerate(traj.states):
            u = traj.controls[k] if k < len(traj.controls) else np.zeros(STATE_DIM)
            w.writerow([repr(k * dt), *(repr(float(v)) for v in s), *(repr(float(v)) for v in u)])


def locked_start(scenario: Scenario) -> np.ndarray:
    """Start state with yaw and pitch aimed at the light."""
    yaw, pitch = look_angles(scenario.start_position, scenario.light)
    return np.concatenate([scenario.start_position, [yaw, pitch]])
