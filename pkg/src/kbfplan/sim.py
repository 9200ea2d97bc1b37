"""Closed-loop path following with safety monitoring.

The follower turns a plan into a time-parameterized reference (linear
interpolation of position and velocity between waypoints, velocities from
finite differences), runs the safety-filtered tracking QP each control
period against the *perceived* obstacle set, and integrates the true plant.
Barrier values against the *true* obstacles are recorded every tick, which is
what the perception-error experiments audit.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

from .core import Control, PlanResult, Scenario, State, combined_radius
from .control import InfeasibleSafety, clf_cbf_qp_control, clf_terms, solve_lyapunov
from .dynamics import (ErrorState, PseudoControl, TransformedState,
                       integrate_step, io_linearize, transform)
from .qp import ActiveSetQp
from .safety import barrier_value

DT_CTRL_DEFAULT = 0.02  # s


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    state: State
    control: Control          # physical control applied over this tick
    mu: tuple[float, float]   # plant pseudo-control commanded this tick
    b_values: tuple[float, ...]  # barrier value per true obstacle
    V: float
    d: float                  # tracking-row slack granted by the QP


@dataclass(frozen=True)
class Trajectory:
    samples: tuple[TrajectorySample, ...]
    dt_ctrl: float


class ControllerInfeasible(RuntimeError):
    """The per-tick safety QP became infeasible; carries the partial run."""

    def __init__(self, t: float, trajectory: Trajectory):
        super().__init__(f"controller infeasible at t={t:.3f}s")
        self.t = t
        self.trajectory = trajectory


class TimeBudgetExceeded(RuntimeError):
    """The plant failed to reach the goal region within the time budget."""

    def __init__(self, t: float, trajectory: Trajectory):
        super().__init__(f"goal not reached within {t:.3f}s")
        self.t = t
        self.trajectory = trajectory


class _PlanReference:
    """Piecewise-linear reference built from plan waypoints.

    Vertex velocities are forward differences of position over the waypoint
    spacing. The plan ends inside the goal region but not necessarily at the
    goal point, and a forward-only vehicle cannot park on an arbitrary nearby
    point, so the reference is extended by one synthetic segment from the
    last waypoint to the goal position; the vehicle crosses the goal region
    at speed instead of trying to stop just outside it. Beyond the last
    timestamp the reference holds position with zero velocity.
    """

    def __init__(self, plan: PlanResult, goal_xy: tuple[float, float] | None = None):
        wps = plan.waypoints
        self.times = [w.t for w in wps]
        self.px = [w.state.x for w in wps]
        self.py = [w.state.y for w in wps]
        if goal_xy is not None:
            dist = math.hypot(goal_xy[0] - self.px[-1], goal_xy[1] - self.py[-1])
            if dist > 1e-9:
                if len(self.times) > 1:
                    last_span = self.times[-1] - self.times[-2]
                    last_len = math.hypot(self.px[-1] - self.px[-2],
                                          self.py[-1] - self.py[-2])
                    speed = max(last_len / last_span, 0.1)
                else:
                    speed = 0.5
                self.times.append(self.times[-1] + dist / speed)
                self.px.append(goal_xy[0])
                self.py.append(goal_xy[1])
        n = len(self.times)
        self.vx = [0.0] * n
        self.vy = [0.0] * n
        for k in range(n - 1):
            span = self.times[k + 1] - self.times[k]
            self.vx[k] = (self.px[k + 1] - self.px[k]) / span
            self.vy[k] = (self.py[k + 1] - self.py[k]) / span
        self.duration = self.times[-1]

    def eval(self, t: float):
        """(pos, vel, acc) of the reference at time t."""
        if t <= 0.0:
            return ((self.px[0], self.py[0]), (self.vx[0], self.vy[0]), (0.0, 0.0))
        if t >= self.duration or len(self.times) == 1:
            return ((self.px[-1], self.py[-1]), (0.0, 0.0), (0.0, 0.0))
        k = bisect.bisect_right(self.times, t) - 1
        span = self.times[k + 1] - self.times[k]
        s = (t - self.times[k]) / span
        pos = (self.px[k] + s * (self.px[k + 1] - self.px[k]),
               self.py[k] + s * (self.py[k + 1] - self.py[k]))
        vel = (self.vx[k] + s * (self.vx[k + 1] - self.vx[k]),
               self.vy[k] + s * (self.vy[k + 1] - self.vy[k]))
        acc = ((self.vx[k + 1] - self.vx[k]) / span,
               (self.vy[k + 1] - self.vy[k]) / span)
        return pos, vel, acc


def follow_path(plan: PlanResult, s: Scenario, dt_ctrl: float = DT_CTRL_DEFAULT,
                perceived_obstacles=None, time_budget: float | None = None) -> Trajectory:
    """Track a plan with the safety-filtered QP controller on the true plant.

    The controller's barrier rows use `perceived_obstacles` (defaults to the
    scenario's true set); recorded barrier values always use the true set.
    Terminates when the plant enters the goal region. Raises
    ControllerInfeasible if the safety QP fails and TimeBudgetExceeded when
    the budget (plan duration + 10 s by default) runs out; both carry the
    partial trajectory.
    """
    if perceived_obstacles is None:
        perceived_obstacles = s.obstacles
    data = solve_lyapunov(s.clf)
    solver = ActiveSetQp()
    ref = _PlanReference(plan, (s.goal.x, s.goal.y))
    if time_budget is None:
        time_budget = ref.duration + 10.0
    true_radii = [combined_radius(o, s.robot) for o in s.obstacles]
    tol2 = s.planner.goal_tolerance ** 2
    gx, gy = s.goal.x, s.goal.y

    z = plan.waypoints[0].state
    t = 0.0
    samples: list[TrajectorySample] = []

    def snapshot(state: State) -> tuple[float, ...]:
        return tuple(barrier_value(state, o, r) for o, r in zip(s.obstacles, true_radii))

    while True:
        dx = z.x - gx
        dy = z.y - gy
        if dx * dx + dy * dy <= tol2:
            x = transform(z)
            pos, vel, _ = ref.eval(t)
            e = ErrorState((pos[0] - x.x1[0], pos[1] - x.x1[1],
                            vel[0] - x.x2[0], vel[1] - x.x2[1]))
            terms = clf_terms(e, data)
            samples.append(TrajectorySample(t, z, Control(0.0, 0.0), (0.0, 0.0),
                                            snapshot(z), terms.V, 0.0))
            return Trajectory(tuple(samples), dt_ctrl)
        if t > time_budget:
            raise TimeBudgetExceeded(t, Trajectory(tuple(samples), dt_ctrl))

        pos, vel, acc = ref.eval(t)
        x_rm = TransformedState(pos, vel)
        try:
            mu_e, slack = clf_cbf_qp_control(z, x_rm, perceived_obstacles, s.robot,
                                             s.cbf, s.clf, data, solver, mu_rm=acc)
        except InfeasibleSafety as exc:
            raise ControllerInfeasible(t, Trajectory(tuple(samples), dt_ctrl)) from exc
        mu_plant = (acc[0] - mu_e.mu[0], acc[1] - mu_e.mu[1])
        u = io_linearize(z, PseudoControl(mu_plant), s.robot)

        x = transform(z)
        e = ErrorState((pos[0] - x.x1[0], pos[1] - x.x1[1],
                        vel[0] - x.x2[0], vel[1] - x.x2[1]))
        terms = clf_terms(e, data)
        samples.append(TrajectorySample(t, z, u, mu_plant, snapshot(z), terms.V, slack))

        z = integrate_step(z, u, dt_ctrl, s.robot)
        t += dt_ctrl


def min_barrier(traj: Trajectory):
    """Global minimum of the recorded barrier values.

    Returns (value, time, obstacle index), or None when the trajectory was
    run with no obstacles (the minimum over an empty set).
    """
    best = None
    for sample in traj.samples:
        for j, b in enumerate(sample.b_values):
            if best is None or b < best[0]:
                best = (b, sample.t, j)
    return best


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """One row per tick: t,x,y,theta,v,c,a,minB,V,d with 12 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,x,y,theta,v,c,a,minB,V,d\n")
        for smp in traj.samples:
            min_b = min(smp.b_values) if smp.b_values else math.inf
            row = (smp.t, smp.state.x, smp.state.y, smp.state.theta, smp.state.v,
                   smp.control.c, smp.control.a, min_b, smp.V, smp.d)
            fh.write(",".join(format(v, ".12g") for v in row) + "\n")
