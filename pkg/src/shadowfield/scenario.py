"""Scenario description for the planner and its JSON file format.

Example::

    {
      "grid": {"dims": [60, 60, 10], "resolution": 10, "origin": [0.05, 0.05, 0.05]},
      "scene": [{"min": [2, 2, 0], "max": [2.4, 4, 1], "p": 1.0}],
      "light": [1.0, 3.0, 0.5],
      "start": {"position": [3.4, 3.1, 0.5], "yaw": 0.0, "pitch": 0.0},
      "horizon": {"steps": 20, "dt": 0.05},
      "bounds": {"max_speed": 1.0, "max_angular_rate": 2.0},
      "weights": {"input": 0.1, "angular_input": 0.01, "visibility": 1.0,
                  "orientation": 1.0, "goal": 0.0, "goal_position": null},
      "barrier": {"delta": 0.1},
      "orientation": {"alpha": 0.1, "beta": 1.0, "epsilon": 10.0, "roll": 0.0},
      "threshold": 0.5,
      "rh_steps": 100
    }

``start.yaw``/``start.pitch`` may be ``"locked"`` to start aimed at the light.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .costs import BarrierParams, OrientationParams, look_angles
from .occupancy import GridGeometry, OccupancyGrid, add_box, new_grid


class ScenarioError(ValueError):
    """Invalid scenario; the message names the offending key."""


@dataclass(frozen=True)
class Box:
    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]
    p: float = 1.0


@dataclass(frozen=True)
class Scenario:
    grid: GridGeometry
    light: np.ndarray
    start_position: np.ndarray
    start_yaw: float
    start_pitch: float
    boxes: tuple[Box, ...] = ()
    horizon_steps: int = 20
    dt: float = 0.05
    max_speed: float = 1.0
    max_angular_rate: float = 2.0
    input_weight: float = 0.1
    angular_input_weight: float = 0.01
    visibility_weight: float = 1.0
    orientation_weight: float = 1.0
    goal_weight: float = 0.0
    goal_position: np.ndarray | None = None
    barrier: BarrierParams = field(default_factory=BarrierParams)
    orientation: OrientationParams = field(default_factory=OrientationParams)
    threshold: float = 0.5
    rh_steps: int = 50
    max_iter: int = 100

    def __post_init__(self):
        if self.horizon_steps < 1:
            raise ScenarioError("horizon.steps must be >= 1")
        if not self.dt > 0:
            raise ScenarioError("horizon.dt must be > 0")
        if not self.max_speed > 0:
            raise ScenarioError("bounds.max_speed must be > 0")
        if not self.max_angular_rate > 0:
            raise ScenarioError("bounds.max_angular_rate must be > 0")
        if self.rh_steps < 0:
            raise ScenarioError("rh_steps must be >= 0")
        for name in ("input_weight", "angular_input_weight", "visibility_weight",
                     "orientation_weight", "goal_weight"):
            if getattr(self, name) < 0:
                raise ScenarioError(f"weights.{name.replace('_weight', '')} must be >= 0")

    @property
    def horizon(self) -> float:
        return self.horizon_steps * self.dt

    @property
    def control_weights(self) -> np.ndarray:
        return np.array([self.input_weight] * 3 + [self.angular_input_weight] * 2)

    @property
    def start_state(self) -> np.ndarray:
        return np.concatenate([self.start_position, [self.start_yaw, self.start_pitch]])

    def with_changes(self, **kw) -> "Scenario":
        return replace(self, **kw)

    def build_grid(self) -> OccupancyGrid:
        grid = new_grid(self.grid, 0.0)
        for b in self.boxes:
            add_box(grid, b.min_corner, b.max_corner, b.p)
        return grid


_TOP_KEYS = {"grid", "scene", "light", "start", "horizon", "bounds", "weights",
             "barrier", "orientation", "threshold", "rh_steps", "solver"}


def _get(d, key, path, kind=float, default=None, required=False):
    if key not in d or d[key] is None:
        if required:
            raise ScenarioError(f"missing scenario key '{path}'")
        return default
    v = d[key]
    try:
        if kind is float:
            if isinstance(v, bool):
                raise TypeError
            out = float(v)
            if not math.isfinite(out):
                raise ValueError
            return out
        if kind is int:
            if isinstance(v, bool) or int(v) != v:
                raise TypeError
            return int(v)
        if kind == "vec3":
            arr = np.asarray(v, dtype=float)
            if arr.shape != (3,) or not np.all(np.isfinite(arr)):
                raise ValueError
            return arr
    except (TypeError, ValueError):
        raise ScenarioError(f"scenario key '{path}' has invalid value {v!r}") from None
    raise AssertionError(kind)


def _section(d, key):
    sec = d.get(key, {})
    if sec is None:
        sec = {}
    if not isinstance(sec, dict):
        raise ScenarioError(f"scenario key '{key}' must be an object")
    return sec


def _check_keys(sec, allowed, prefix):
    for k in sec:
        if k not in allowed:
            raise ScenarioError(f"unknown scenario key '{prefix}{k}'")


def scenario_from_dict(d: dict) -> Scenario:
    if not isinstance(d, dict):
        raise ScenarioError("scenario must be a JSON object")
    _check_keys(d, _TOP_KEYS, "")

    g = _section(d, "grid")
    _check_keys(g, {"dims", "resolution", "origin"}, "grid.")
    if "dims" not in g:
        raise ScenarioError("missing scenario key 'grid.dims'")
    try:
        dims = tuple(int(v) for v in g["dims"])
        geo = GridGeometry(dims, _get(g, "resolution", "grid.resolution", required=True),
                           tuple(g.get("origin", (0.0, 0.0, 0.0))))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"scenario key 'grid' is invalid: {exc}") from None

    boxes = []
    scene = d.get("scene", [])
    if not isinstance(scene, list):
        raise ScenarioError("scenario key 'scene' must be a list of boxes")
    for i, b in enumerate(scene):
        path = f"scene[{i}]"
        if not isinstance(b, dict):
            raise ScenarioError(f"scenario key '{path}' must be an object")
        _check_keys(b, {"min", "max", "p"}, path + ".")
        lo = _get(b, "min", path + ".min", "vec3", required=True)
        hi = _get(b, "max", path + ".max", "vec3", required=True)
        if np.any(lo > hi):
            raise ScenarioError(f"scenario key '{path}' has min > max")
        p = _get(b, "p", path + ".p", default=1.0)
        if not 0.0 <= p <= 1.0:
            raise ScenarioError(f"scenario key '{path}.p' must lie in [0, 1]")
        boxes.append(Box(tuple(lo), tuple(hi), p))

    light = _get(d, "light", "light", "vec3", required=True)

    s = _section(d, "start")
    _check_keys(s, {"position", "yaw", "pitch"}, "start.")
    pos = _get(s, "position", "start.position", "vec3", required=True)
    if np.linalg.norm(pos - light) < 1e-9:
        raise ScenarioError("scenario key 'start.position' coincides with 'light'")
    lock_yaw, lock_pitch = look_angles(pos, light)
    yaw = float(lock_yaw) if s.get("yaw") == "locked" else _get(s, "yaw", "start.yaw", default=0.0)
    pitch = (float(lock_pitch) if s.get("pitch") == "locked"
             else _get(s, "pitch", "start.pitch", default=0.0))

    h = _section(d, "horizon")
    _check_keys(h, {"steps", "dt"}, "horizon.")
    bnd = _section(d, "bounds")
    _check_keys(bnd, {"max_speed", "max_angular_rate"}, "bounds.")
    w = _section(d, "weights")
    _check_keys(w, {"input", "angular_input", "visibility", "orientation", "goal",
                    "goal_position"}, "weights.")
    bar = _section(d, "barrier")
    _check_keys(bar, {"delta"}, "barrier.")
    ori = _section(d, "orientation")
    _check_keys(ori, {"alpha", "beta", "epsilon", "roll"}, "orientation.")
    sol = _section(d, "solver")
    _check_keys(sol, {"max_iter"}, "solver.")

    vis_w = _get(w, "visibility", "weights.visibility", default=1.0)
    try:
        barrier = BarrierParams(_get(bar, "delta", "barrier.delta", default=0.1), vis_w)
    except ValueError as exc:
        raise ScenarioError(f"scenario key 'barrier.delta' is invalid: {exc}") from None
    try:
        oparams = OrientationParams(
            _get(ori, "alpha", "orientation.alpha", default=0.1),
            _get(ori, "beta", "orientation.beta", default=1.0),
            _get(ori, "epsilon", "orientation.epsilon", default=10.0),
            _get(ori, "roll", "orientation.roll", default=0.0))
    except ValueError as exc:
        raise ScenarioError(f"scenario key 'orientation' is invalid: {exc}") from None

    goal_pos = _get(w, "goal_position", "weights.goal_position", "vec3")
    goal_w = _get(w, "goal", "weights.goal", default=0.0)
    if goal_w > 0 and goal_pos is None:
        raise ScenarioError("scenario key 'weights.goal_position' is required when weights.goal > 0")

    return Scenario(
        grid=geo, light=light, start_position=pos, start_yaw=yaw, start_pitch=pitch,
        boxes=tuple(boxes),
        horizon_steps=_get(h, "steps", "horizon.steps", int, default=20),
        dt=_get(h, "dt", "horizon.dt", default=0.05),
        max_speed=_get(bnd, "max_speed", "bounds.max_speed", default=1.0),
        max_angular_rate=_get(bnd, "max_angular_rate", "bounds.max_angular_rate", default=2.0),
        input_weight=_get(w, "input", "weights.input", default=0.1),
        angular_input_weight=_get(w, "angular_input", "weights.angular_input", default=0.01),
        visibility_weight=vis_w,
        orientation_weight=_get(w, "orientation", "weights.orientation", default=1.0),
        goal_weight=goal_w, goal_position=goal_pos,
        barrier=barrier, orientation=oparams,
        threshold=_get(d, "threshold", "threshold", default=0.5),
        rh_steps=_get(d, "rh_steps", "rh_steps", int, default=50),
        max_iter=_get(sol, "max_iter", "solver.max_iter", int, default=100),
    )


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file is not valid JSON: {exc}") from None
    return scenario_from_dict(d)
