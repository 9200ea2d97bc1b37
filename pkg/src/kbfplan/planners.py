"""Tree-search planners: geometric, barrier-gated kinodynamic, and QP-steered.

All planners share the Tree structure and are deterministic functions of
(scenario, rng): a seeded generator reproduces the run bit for bit.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .core import (Control, PlanResult, Scenario, State, UncertaintyBounds,
                   Waypoint, combined_radius)
from .control import InfeasibleSafety, clf_cbf_qp_control, solve_lyapunov
from .dynamics import PseudoControl, TransformedState, integrate_step, io_linearize
from .qp import ActiveSetQp
from .safety import _a_and_s, barrier_value, sample_control


class NoPath(RuntimeError):
    """The iteration budget ran out before the goal region was reached."""

    def __init__(self, message: str, iterations: int):
        super().__init__(message)
        self.iterations = iterations


class Tree:
    """Append-only search tree over vehicle states.

    Node 0 is the root (no parent); children always have larger indices than
    their parent, so the structure is acyclic by construction. Planar
    positions are mirrored into a growing array used as the nearest-neighbor
    index (vectorized scan; plenty fast at the tree sizes seen here).
    """

    def __init__(self, root: State):
        self.states: list[State] = [root]
        self.parents: list[int] = [-1]
        self.controls: list[Control | None] = [None]
        self._xy = np.empty((128, 2))
        self._xy[0, 0] = root.x
        self._xy[0, 1] = root.y
        self._count = 1

    def __len__(self) -> int:
        return self._count

    def add(self, state: State, parent: int, control: Control | None) -> int:
        if self._count == self._xy.shape[0]:
            grown = np.empty((2 * self._count, 2))
            grown[: self._count] = self._xy
            self._xy = grown
        idx = self._count
        self._xy[idx, 0] = state.x
        self._xy[idx, 1] = state.y
        self._count = idx + 1
        self.states.append(state)
        self.parents.append(parent)
        self.controls.append(control)
        return idx

    def nearest(self, qx: float, qy: float) -> int:
        pts = self._xy[: self._count]
        d2 = (pts[:, 0] - qx) ** 2 + (pts[:, 1] - qy) ** 2
        return int(np.argmin(d2))  # argmin keeps the lowest index on ties

    def path_indices(self, leaf: int) -> list[int]:
        chain = []
        i = leaf
        while i >= 0:
            chain.append(i)
            i = self.parents[i]
        chain.reverse()
        return chain

    def edges(self) -> tuple[tuple[int, int], ...]:
        return tuple((self.parents[i], i) for i in range(1, self._count))

    def node_positions(self) -> tuple[tuple[float, float], ...]:
        return tuple((z.x, z.y) for z in self.states)


def nearest_neighbor(tree: Tree, q: tuple[float, float]) -> int:
    """Index of the tree node whose position is closest to q (lowest on ties)."""
    return tree.nearest(q[0], q[1])


def point_segment_distance(px: float, py: float, ax: float, ay: float,
                           bx: float, by: float) -> float:
    """Distance from point (px, py) to the closed segment a-b."""
    dx = bx - ax
    dy = by - ay
    seg2 = dx * dx + dy * dy
    if seg2 <= 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / seg2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def segment_collision(p0: tuple[float, float], p1: tuple[float, float],
                      obstacles, radii) -> bool:
    """True iff the closed segment comes strictly closer than the combined
    radius to any obstacle center (touching the boundary is safe)."""
    for o, r in zip(obstacles, radii):
        if point_segment_distance(o.x, o.y, p0[0], p0[1], p1[0], p1[1]) < r:
            return True
    return False


def _trivial_plan(s: Scenario, started: float, iterations: int) -> PlanResult:
    wp = Waypoint(0.0, s.start, None)
    return PlanResult((wp,), ((s.start.x, s.start.y),), (), iterations,
                      time.perf_counter() - started)


def _goal_reached(state: State, s: Scenario) -> bool:
    dx = state.x - s.goal.x
    dy = state.y - s.goal.y
    tol = s.planner.goal_tolerance
    return dx * dx + dy * dy <= tol * tol


def plan_rrt(s: Scenario, rng: np.random.Generator) -> PlanResult:
    """Classic geometric tree search with fixed-length extensions.

    Uniform point samples in the workspace, nearest-neighbor selection,
    constant step toward the sample, straight-segment obstacle gate. The
    waypoints carry no controls; headings and speeds are reconstructed from
    segment geometry at a constant reference speed so the result is still
    followable.
    """
    started = time.perf_counter()
    if _goal_reached(s.start, s):
        return _trivial_plan(s, started, 0)
    tree = Tree(s.start)
    b = s.bounds
    step = s.planner.step_size
    radii = [combined_radius(o, s.robot) for o in s.obstacles]
    obstacles = s.obstacles
    v_nom = 0.8 * s.robot.v_max

    for it in range(1, s.planner.max_iters + 1):
        qx = rng.uniform(b.xmin, b.xmax)
        qy = rng.uniform(b.ymin, b.ymax)
        i = tree.nearest(qx, qy)
        zi = tree.states[i]
        dx = qx - zi.x
        dy = qy - zi.y
        dist = math.hypot(dx, dy)
        if dist < 1e-12:
            continue
        scale = min(step, dist) / dist
        nx = zi.x + dx * scale
        ny = zi.y + dy * scale
        if segment_collision((zi.x, zi.y), (nx, ny), obstacles, radii):
            continue
        heading = math.atan2(ny - zi.y, nx - zi.x)
        j = tree.add(State(nx, ny, heading, v_nom), i, None)
        if _goal_reached(tree.states[j], s):
            return _geometric_plan(tree, j, v_nom, it, started)
    raise NoPath(f"no path after {s.planner.max_iters} iterations", s.planner.max_iters)


def _geometric_plan(tree: Tree, leaf: int, v_nom: float, iterations: int,
                    started: float) -> PlanResult:
    chain = tree.path_indices(leaf)
    waypoints = []
    t = 0.0
    for k, idx in enumerate(chain):
        z = tree.states[idx]
        if k > 0:
            prev = tree.states[chain[k - 1]]
            t += math.hypot(z.x - prev.x, z.y - prev.y) / v_nom
        waypoints.append(Waypoint(t, z, None))
    return PlanResult(tuple(waypoints), tree.node_positions(), tree.edges(),
                      iterations, time.perf_counter() - started)


def _kbf_plan(tree: Tree, leaf: int, dt: float, iterations: int,
              started: float) -> PlanResult:
    chain = tree.path_indices(leaf)
    waypoints = []
    for k, idx in enumerate(chain):
        control = tree.controls[chain[k + 1]] if k + 1 < len(chain) else None
        waypoints.append(Waypoint(k * dt, tree.states[idx], control))
    return PlanResult(tuple(waypoints), tree.node_positions(), tree.edges(),
                      iterations, time.perf_counter() - started)


def _plan_kbf_core(s: Scenario, rng: np.random.Generator, bounds: UncertaintyBounds | None,
                   trace: list | None) -> PlanResult:
    """Shared loop of the barrier-gated planners.

    Each iteration draws a uniformly random visited node and a uniformly
    random admissible control, accepts the pair iff the (robust) barrier
    condition holds at the node for every obstacle, and then integrates one
    control period to create the child node. Extensions leaving the workspace
    are discarded. With `trace` a (node, control, verdict) tuple is appended
    per iteration, which is how the zero-bound reduction is audited.
    """
    started = time.perf_counter()
    if _goal_reached(s.start, s):
        return _trivial_plan(s, started, 0)
    tree = Tree(s.start)
    states = tree.states
    robot = s.robot
    g1 = s.cbf.gamma1
    g2 = s.cbf.gamma2
    dt = s.planner.dt
    wb = s.bounds
    gx, gy = s.goal.x, s.goal.y
    tol2 = s.planner.goal_tolerance ** 2
    cmax = robot.c_max
    a_max = robot.a_max
    obs = [(o.x, o.y, combined_radius(o, robot)) for o in s.obstacles]
    robust = bounds is not None and (bounds.delta1_max != 0.0 or bounds.delta2_max != 0.0)
    d1 = bounds.delta1_max if bounds is not None else 0.0
    d2p = 1.0 + (bounds.delta2_max if bounds is not None else 0.0)
    d2n = 1.0 - (bounds.delta2_max if bounds is not None else 0.0)
    uniform = rng.uniform
    integers = rng.integers

    for it in range(1, s.planner.max_iters + 1):
        i = int(integers(0, len(states)))
        z = states[i]
        c = uniform(-cmax, cmax)
        a = uniform(0.0, a_max)

        sin_t = math.sin(z.theta)
        cos_t = math.cos(z.theta)
        vx = z.v * cos_t
        vy = z.v * sin_t
        v2 = z.v * z.v
        mu1 = -v2 * sin_t * c + cos_t * a
        mu2 = v2 * cos_t * c + sin_t * a
        ok = True
        for ox, oy, r in obs:
            A, sv = _a_and_s(z.x - ox, z.y - oy, vx, vy, mu1, mu2, r, g1, g2)
            if robust:
                A -= d1 * (abs(2.0 * (z.x - ox)) + abs(2.0 * (z.y - oy)))
                sp = sv * d2p
                sn = sv * d2n
                sv = sp if sp < sn else sn
            if A + sv < 0.0:
                ok = False
                break
        if trace is not None:
            trace.append((i, c, a, ok))
        if not ok:
            continue

        u = Control(c, a)
        z2 = integrate_step(z, u, dt, robot)
        if not (wb.xmin <= z2.x <= wb.xmax and wb.ymin <= z2.y <= wb.ymax):
            continue
        j = tree.add(z2, i, u)
        ddx = z2.x - gx
        ddy = z2.y - gy
        if ddx * ddx + ddy * ddy <= tol2:
            return _kbf_plan(tree, j, dt, it, started)
    raise NoPath(f"no path after {s.planner.max_iters} iterations", s.planner.max_iters)


def plan_rrt_kbf(s: Scenario, rng: np.random.Generator,
                 trace: list | None = None) -> PlanResult:
    """Barrier-gated kinodynamic planner.

    Accepted edges hold a randomly sampled control for one dt; the stored
    per-edge controls replay exactly through integrate_step, so the plan is
    directly executable.
    """
    return _plan_kbf_core(s, rng, None, trace)


def plan_robust_rrt_kbf(s: Scenario, bounds: UncertaintyBounds,
                        rng: np.random.Generator,
                        trace: list | None = None) -> PlanResult:
    """Barrier-gated planner with the worst-case model-mismatch gate.

    With zero bounds this reproduces plan_rrt_kbf exactly: same random
    sequence, same accept/reject verdicts, same tree.
    """
    return _plan_kbf_core(s, rng, bounds, trace)


def plan_rrt_cbf_qp(s: Scenario, rng: np.random.Generator, *, k_sim: int = 10,
                    steer_speed_frac: float = 0.6,
                    sample_tolerance: float = 0.1) -> PlanResult:
    """Baseline that steers every extension with the safety-filtered QP.

    Each extension simulates the closed-loop tracking controller from the
    nearest node toward the sampled point, for at most k_sim control periods
    of dt (ten controller ticks per period), stopping early on arrival at the
    sample or the goal. The chain is accepted only if every intermediate
    state kept all barriers nonnegative; a barrier dip or an infeasible tick
    discards the whole extension. Simulating the loop makes each extension
    orders of magnitude more expensive than a sampled-control gate, which is
    the point of carrying this baseline. The steering reference (constant
    speed steer_speed_frac * v_max toward the sample) and the horizon cap are
    reconstruction choices, reported with benchmark output.
    """
    started = time.perf_counter()
    if _goal_reached(s.start, s):
        return _trivial_plan(s, started, 0)
    tree = Tree(s.start)
    robot = s.robot
    dt_sub = s.planner.dt / 10.0
    max_ticks = 10 * k_sim
    b = s.bounds
    radii = [combined_radius(o, s.robot) for o in s.obstacles]
    data = solve_lyapunov(s.clf)
    solver = ActiveSetQp()
    v_ref = steer_speed_frac * robot.v_max
    tol2 = sample_tolerance * sample_tolerance

    for it in range(1, s.planner.max_iters + 1):
        qx = rng.uniform(b.xmin, b.xmax)
        qy = rng.uniform(b.ymin, b.ymax)
        i = tree.nearest(qx, qy)
        z0 = tree.states[i]
        dx = qx - z0.x
        dy = qy - z0.y
        dist = math.hypot(dx, dy)
        if dist < 1e-9:
            continue
        ux = dx / dist
        uy = dy / dist

        chain: list[tuple[State, Control]] = []
        z = z0
        ok = True
        reached = False
        for k in range(1, max_ticks + 1):
            adv = min(v_ref * k * dt_sub, dist)
            ref_pos = (z0.x + ux * adv, z0.y + uy * adv)
            ref_vel = (0.0, 0.0) if adv >= dist else (ux * v_ref, uy * v_ref)
            try:
                mu_e, _ = clf_cbf_qp_control(z, TransformedState(ref_pos, ref_vel),
                                             s.obstacles, robot, s.cbf, s.clf,
                                             data, solver)
            except InfeasibleSafety:
                ok = False
                break
            mu_plant = PseudoControl((-mu_e.mu[0], -mu_e.mu[1]))
            u = io_linearize(z, mu_plant, robot)
            z = integrate_step(z, u, dt_sub, robot)
            if not b.contains(z.x, z.y):
                ok = False
                break
            if any(barrier_value(z, o, r) < 0.0 for o, r in zip(s.obstacles, radii)):
                ok = False
                break
            chain.append((z, u))
            if _goal_reached(z, s):
                reached = True
                break
            if (z.x - qx) ** 2 + (z.y - qy) ** 2 <= tol2:
                break  # sample reached; extension complete
        if not ok or not chain:
            continue
        parent = i
        for zs, us in chain:
            parent = tree.add(zs, parent, us)
        if reached:
            return _kbf_plan(tree, parent, dt_sub, it, started)
    raise NoPath(f"no path after {s.planner.max_iters} iterations", s.planner.max_iters)


PLANNER_NAMES = ("rrt", "rrt-kbf", "robust-rrt-kbf", "rrt-cbf-qp")

# carried into benchmark output so comparisons against the reconstructed
# baseline state their assumptions
CBF_QP_BASELINE_NOTE = ("rrt-cbf-qp baseline: closed-loop QP steering toward each "
                        "sample, horizon k_sim*dt (k_sim=10), controller period "
                        "dt/10, steer speed 0.6*v_max")


def plan(name: str, s: Scenario, rng: np.random.Generator,
         bounds: UncertaintyBounds | None = None) -> PlanResult:
    """Dispatch a planner by CLI name."""
    if name == "rrt":
        return plan_rrt(s, rng)
    if name == "rrt-kbf":
        return plan_rrt_kbf(s, rng)
    if name == "robust-rrt-kbf":
        return plan_robust_rrt_kbf(s, bounds or UncertaintyBounds(0.0, 0.0), rng)
    if name == "rrt-cbf-qp":
        return plan_rrt_cbf_qp(s, rng)
    raise ValueError(f"unknown planner {name!r}; choose from {PLANNER_NAMES}")
