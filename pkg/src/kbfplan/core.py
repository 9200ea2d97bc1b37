"""Shared domain types, the scenario model, and validation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Normalize an angle to the interval (-pi, pi]."""
    w = math.fmod(theta + math.pi, TWO_PI)
    if w <= 0.0:
        w += TWO_PI
    return w - math.pi


class ParseError(ValueError):
    """A scenario file could not be parsed (bad JSON, unknown or missing key)."""


class UnsupportedBound(ValueError):
    """Uncertainty bounds outside the supported range."""


@dataclass(frozen=True)
class State:
    """Vehicle configuration: planar position, heading, forward speed."""

    x: float      # m
    y: float      # m
    theta: float  # rad, kept in (-pi, pi]
    v: float      # m/s

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Control:
    """Physical input pair applied to the vehicle."""

    c: float  # curvature command tan(steering)/wheelbase, 1/m
    a: float  # longitudinal acceleration, m/s^2


@dataclass(frozen=True)
class RobotParams:
    L: float = 0.2                        # wheelbase, m
    psi_max: float = math.radians(30.0)   # max steering angle, rad
    a_max: float = 1.0                    # max acceleration, m/s^2
    v_max: float = 1.2                    # max forward speed, m/s
    r_r: float = 0.25                     # robot safety-circle radius, m

    @property
    def c_max(self) -> float:
        """Largest curvature command the steering can realize."""
        return math.tan(self.psi_max) / self.L


@dataclass(frozen=True)
class Obstacle:
    x: float  # center x, m
    y: float  # center y, m
    r: float  # radius, m


@dataclass(frozen=True)
class CbfParams:
    """Gains of the order-2 exponential barrier chain."""

    gamma1: float = 1.0  # 1/s
    gamma2: float = 1.0  # 1/s


def _gain_matrix(value: Any, size: int) -> np.ndarray:
    """Coerce a scalar or nested list to a read-only (size x size) float matrix."""
    if np.isscalar(value):
        arr = float(value) * np.eye(size)
    else:
        arr = np.array(value, dtype=float)
    if arr.shape != (size, size):
        raise ValueError(f"expected a scalar or {size}x{size} matrix, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ClfParams:
    """Tracking-controller gains and the QP relaxation penalty.

    K_P and K_D may be given as scalars (interpreted as multiples of the
    2x2 identity) or full 2x2 matrices; Q likewise for the 4x4 case.
    """

    K_P: Any = 1.0
    K_D: Any = 1.0
    Q: Any = 1.0
    penalty: float = 1.0e3

    def __post_init__(self) -> None:
        object.__setattr__(self, "K_P", _gain_matrix(self.K_P, 2))
        object.__setattr__(self, "K_D", _gain_matrix(self.K_D, 2))
        object.__setattr__(self, "Q", _gain_matrix(self.Q, 4))
        object.__setattr__(self, "penalty", float(self.penalty))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ClfParams):
            return NotImplemented
        return (
            np.array_equal(self.K_P, other.K_P)
            and np.array_equal(self.K_D, other.K_D)
            and np.array_equal(self.Q, other.Q)
            and self.penalty == other.penalty
        )


@dataclass(frozen=True)
class UncertaintyBounds:
    """Box bounds on the additive / multiplicative model-mismatch terms."""

    delta1_max: float = 0.0  # additive acceleration error bound, m/s^2
    delta2_max: float = 0.0  # multiplicative error bound, dimensionless fraction

    def __post_init__(self) -> None:
        if not (math.isfinite(self.delta1_max) and self.delta1_max >= 0.0):
            raise UnsupportedBound(f"delta1_max must be finite and >= 0, got {self.delta1_max}")
        if not (math.isfinite(self.delta2_max) and 0.0 <= self.delta2_max < 1.0):
            # a multiplicative bound >= 1 flips the sign of the worst-case row
            raise UnsupportedBound(f"delta2_max must lie in [0, 1), got {self.delta2_max}")


@dataclass(frozen=True)
class PlannerConfig:
    step_size: float = 0.5        # geometric extension length, m
    dt: float = 0.1               # control hold per kinodynamic extension, s
    max_iters: int = 50_000
    goal_tolerance: float = 0.5   # goal acceptance radius, m
    seed: int = 0


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned workspace rectangle."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax


@dataclass(frozen=True)
class Scenario:
    start: State
    goal: State
    obstacles: tuple[Obstacle, ...] = ()
    bounds: Bounds = Bounds(0.0, 10.0, 0.0, 10.0)
    robot: RobotParams = RobotParams()
    cbf: CbfParams = CbfParams()
    clf: ClfParams = field(default_factory=ClfParams)
    planner: PlannerConfig = PlannerConfig()

    def __post_init__(self) -> None:
        object.__setattr__(self, "obstacles", tuple(self.obstacles))


def combined_radius(o: Obstacle, robot: RobotParams) -> float:
    """Safety distance between vehicle center and obstacle center."""
    return o.r + robot.r_r


@dataclass(frozen=True)
class Violation:
    kind: str     # e.g. "NonPositiveParameter"
    field: str    # dotted path of the offending field
    value: Any
    rule: str     # human-readable rule that was broken


class ScenarioValidationError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        lines = "; ".join(f"{v.kind}: {v.field}={v.value!r} ({v.rule})" for v in violations)
        super().__init__(f"invalid scenario: {lines}")


def _positive(violations: list[Violation], name: str, value: float) -> None:
    if not (math.isfinite(value) and value > 0.0):
        violations.append(Violation("NonPositiveParameter", name, value, "must be > 0"))


def _spd(violations: list[Violation], name: str, mat: np.ndarray) -> None:
    if not np.allclose(mat, mat.T, atol=1e-12, rtol=0.0):
        violations.append(Violation("ParameterOutOfRange", name, mat.tolist(), "must be symmetric"))
        return
    if np.min(np.linalg.eigvalsh(mat)) <= 0.0:
        violations.append(
            Violation("ParameterOutOfRange", name, mat.tolist(), "must be positive definite")
        )


def validate_scenario(s: Scenario) -> Scenario:
    """Check every scenario invariant; return the scenario unchanged if all hold.

    Raises ScenarioValidationError carrying the full list of violations
    otherwise. Validation is pure, so re-validating a validated scenario
    yields the same result.
    """
    v: list[Violation] = []

    _positive(v, "robot.L", s.robot.L)
    _positive(v, "robot.psi_max", s.robot.psi_max)
    if s.robot.psi_max >= math.pi / 2:
        v.append(Violation("ParameterOutOfRange", "robot.psi_max", s.robot.psi_max,
                           "must be < pi/2"))
    _positive(v, "robot.a_max", s.robot.a_max)
    _positive(v, "robot.v_max", s.robot.v_max)
    _positive(v, "robot.r_r", s.robot.r_r)

    for i, o in enumerate(s.obstacles):
        _positive(v, f"obstacles[{i}].r", o.r)

    _positive(v, "cbf.gamma1", s.cbf.gamma1)
    _positive(v, "cbf.gamma2", s.cbf.gamma2)
    _positive(v, "clf.penalty", s.clf.penalty)
    _spd(v, "clf.K_P", s.clf.K_P)
    _spd(v, "clf.K_D", s.clf.K_D)
    _spd(v, "clf.Q", s.clf.Q)

    _positive(v, "planner.step_size", s.planner.step_size)
    _positive(v, "planner.dt", s.planner.dt)
    _positive(v, "planner.goal_tolerance", s.planner.goal_tolerance)
    if s.planner.max_iters <= 0:
        v.append(Violation("NonPositiveParameter", "planner.max_iters",
                           s.planner.max_iters, "must be > 0"))

    b = s.bounds
    if not (b.xmin < b.xmax and b.ymin < b.ymax):
        v.append(Violation("ParameterOutOfRange", "bounds", (b.xmin, b.xmax, b.ymin, b.ymax),
                           "must satisfy xmin < xmax and ymin < ymax"))
    else:
        if not b.contains(s.start.x, s.start.y):
            v.append(Violation("StartOutOfBounds", "start", (s.start.x, s.start.y),
                               "start must lie inside bounds"))
        if not b.contains(s.goal.x, s.goal.y):
            v.append(Violation("GoalOutOfBounds", "goal", (s.goal.x, s.goal.y),
                               "goal must lie inside bounds"))

    if not (0.0 <= s.start.v <= s.robot.v_max):
        v.append(Violation("ParameterOutOfRange", "start.v", s.start.v,
                           f"must lie in [0, v_max={s.robot.v_max}]"))

    for i, o in enumerate(s.obstacles):
        if o.r <= 0.0:
            continue  # already reported above
        r = combined_radius(o, s.robot)
        if math.hypot(s.start.x - o.x, s.start.y - o.y) < r:
            v.append(Violation("StartInCollision", f"obstacles[{i}]", (o.x, o.y, o.r),
                               f"start is closer than r_o + r_r = {r} to the obstacle center"))

    if v:
        raise ScenarioValidationError(v)
    return s


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_STATE_KEYS = {"x", "y", "theta", "v"}
_OBSTACLE_KEYS = {"x", "y", "r"}
_BOUNDS_KEYS = {"xmin", "xmax", "ymin", "ymax"}
_ROBOT_KEYS = {"L", "psi_max", "a_max", "v_max", "r_r"}
_CBF_KEYS = {"gamma1", "gamma2"}
_CLF_KEYS = {"K_P", "K_D", "Q", "penalty"}
_PLANNER_KEYS = {"step_size", "dt", "max_iters", "goal_tolerance", "seed"}
_TOP_KEYS = {"start", "goal", "obstacles", "bounds", "robot", "cbf", "clf", "planner"}


def _check_keys(d: dict, allowed: set[str], where: str) -> None:
    for k in d:
        if k not in allowed:
            raise ParseError(f"unknown key {k!r} in {where}")


def _state_from_dict(d: dict, where: str) -> State:
    _check_keys(d, _STATE_KEYS, where)
    for required in ("x", "y"):
        if required not in d:
            raise ParseError(f"missing key {required!r} in {where}")
    return State(float(d["x"]), float(d["y"]),
                 float(d.get("theta", 0.0)), float(d.get("v", 0.0)))


def scenario_from_dict(d: dict) -> Scenario:
    """Build a Scenario from the JSON object form, applying defaults.

    Unknown keys are rejected at every level so typos fail loudly.
    """
    if not isinstance(d, dict):
        raise ParseError("scenario document must be a JSON object")
    _check_keys(d, _TOP_KEYS, "scenario")
    for required in ("start", "goal", "bounds"):
        if required not in d:
            raise ParseError(f"missing key {required!r} in scenario")

    start = _state_from_dict(d["start"], "start")
    goal = _state_from_dict(d["goal"], "goal")

    bd = d["bounds"]
    _check_keys(bd, _BOUNDS_KEYS, "bounds")
    try:
        bounds = Bounds(float(bd["xmin"]), float(bd["xmax"]),
                        float(bd["ymin"]), float(bd["ymax"]))
    except KeyError as exc:
        raise ParseError(f"missing key {exc.args[0]!r} in bounds") from None

    obstacles = []
    for i, od in enumerate(d.get("obstacles", [])):
        _check_keys(od, _OBSTACLE_KEYS, f"obstacles[{i}]")
        try:
            obstacles.append(Obstacle(float(od["x"]), float(od["y"]), float(od["r"])))
        except KeyError as exc:
            raise ParseError(f"missing key {exc.args[0]!r} in obstacles[{i}]") from None

    rd = d.get("robot", {})
    _check_keys(rd, _ROBOT_KEYS, "robot")
    robot = RobotParams(**{k: float(v) for k, v in rd.items()})

    cd = d.get("cbf", {})
    _check_keys(cd, _CBF_KEYS, "cbf")
    cbf = CbfParams(**{k: float(v) for k, v in cd.items()})

    ld = d.get("clf", {})
    _check_keys(ld, _CLF_KEYS, "clf")
    clf = ClfParams(**ld)

    pd = d.get("planner", {})
    _check_keys(pd, _PLANNER_KEYS, "planner")
    kwargs: dict[str, Any] = {k: float(v) for k, v in pd.items() if k not in ("max_iters", "seed")}
    if "max_iters" in pd:
        kwargs["max_iters"] = int(pd["max_iters"])
    if "seed" in pd:
        kwargs["seed"] = int(pd["seed"])
    planner = PlannerConfig(**kwargs)

    return Scenario(start=start, goal=goal, obstacles=tuple(obstacles), bounds=bounds,
                    robot=robot, cbf=cbf, clf=clf, planner=planner)


def scenario_to_dict(s: Scenario) -> dict:
    """Inverse of scenario_from_dict; emits the fully explicit form."""
    return {
        "start": {"x": s.start.x, "y": s.start.y, "theta": s.start.theta, "v": s.start.v},
        "goal": {"x": s.goal.x, "y": s.goal.y, "theta": s.goal.theta, "v": s.goal.v},
        "obstacles": [{"x": o.x, "y": o.y, "r": o.r} for o in s.obstacles],
        "bounds": {"xmin": s.bounds.xmin, "xmax": s.bounds.xmax,
                   "ymin": s.bounds.ymin, "ymax": s.bounds.ymax},
        "robot": {"L": s.robot.L, "psi_max": s.robot.psi_max, "a_max": s.robot.a_max,
                  "v_max": s.robot.v_max, "r_r": s.robot.r_r},
        "cbf": {"gamma1": s.cbf.gamma1, "gamma2": s.cbf.gamma2},
        "clf": {"K_P": s.clf.K_P.tolist(), "K_D": s.clf.K_D.tolist(),
                "Q": s.clf.Q.tolist(), "penalty": s.clf.penalty},
        "planner": {"step_size": s.planner.step_size, "dt": s.planner.dt,
                    "max_iters": s.planner.max_iters,
                    "goal_tolerance": s.planner.goal_tolerance, "seed": s.planner.seed},
    }


# ---------------------------------------------------------------------------
# planner output
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Waypoint:
    t: float
    state: State
    control: Control | None  # control applied from this waypoint; None on the last


@dataclass(frozen=True)
class PlanResult:
    """Timestamped reference path plus the search tree that produced it."""

    waypoints: tuple[Waypoint, ...]
    tree_nodes: tuple[tuple[float, float], ...]  # planar position per tree node
    tree_edges: tuple[tuple[int, int], ...]      # (parent, child) node indices
    iterations_used: int
    wall_time: float  # s

    def path_length(self) -> float:
        total = 0.0
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            total += math.hypot(b.state.x - a.state.x, b.state.y - a.state.y)
        return total

    def min_clearance(self, s: Scenario, inflated: bool = True) -> float:
        """Smallest distance from any waypoint to any obstacle.

        With inflated=True the combined radius r_o + r_r is subtracted, so a
        positive value means the whole swept disc stays clear; with
        inflated=False the raw center distance is returned.
        """
        best = math.inf
        for w in self.waypoints:
            for o in s.obstacles:
                d = math.hypot(w.state.x - o.x, w.state.y - o.y)
                if inflated:
                    d -= combined_radius(o, s.robot)
                if d < best:
                    best = d
        return best
