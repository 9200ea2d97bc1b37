"""Barrier evaluation and the planner-side safety gates.

For an obstacle at (xo, yo) with combined radius r the barrier is

    B  = (x - xo)^2 + (y - yo)^2 - r^2
    B' = 2 (x - xo) vx + 2 (y - yo) vy
    B1 = B' + gamma1 B

and differentiating once more gives the affine-in-acceleration condition

    B1' + gamma2 B1 = A + b mu >= 0,
    A = gamma1 B' + 2 vx^2 + 2 vy^2 + gamma2 B1,
    b = 2 [x - xo, y - yo],

where mu = g(z) u is the acceleration pair produced by holding the physical
control u at state z. The robust gate additionally guards against an unknown
additive error d1 (per-component bound delta1_max) and a multiplicative error
d2 (|d2| <= delta2_max < 1) acting on mu, by requiring the condition to hold
at the worst corner of the bound box:

    (A - delta1_max ||b||_1) + min(b mu (1 + delta2_max), b mu (1 - delta2_max)) >= 0.

With zero bounds this reduces bit-for-bit to the nominal gate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import (CbfParams, Control, Obstacle, RobotParams, State,
                   UncertaintyBounds)


@dataclass(frozen=True)
class BarrierTerms:
    B: float       # m^2
    Bdot: float    # m^2/s
    B1: float
    # (constant part, row multiplying mu) of the second derivative
    B1dot_affine: tuple[float, tuple[float, float]]


@dataclass(frozen=True)
class RobustTerms:
    A_val: float
    b_row: tuple[float, float]
    psi0_worst: float             # A under the worst additive disturbance
    psi1_p: tuple[float, float]   # b (1 + delta2_max)
    psi1_n: tuple[float, float]   # b (1 - delta2_max)


def barrier_value(z: State, o: Obstacle, r: float) -> float:
    """B only; used by trajectory monitoring."""
    dx = z.x - o.x
    dy = z.y - o.y
    return dx * dx + dy * dy - r * r


def pseudo_accel(z: State, u: Control) -> tuple[float, float]:
    """Acceleration pair mu = g(z) u realized by holding u at state z."""
    s, c = math.sin(z.theta), math.cos(z.theta)
    v2 = z.v * z.v
    return (-v2 * s * u.c + c * u.a, v2 * c * u.c + s * u.a)


def _a_and_s(dx: float, dy: float, vx: float, vy: float,
             mu1: float, mu2: float, r: float, g1: float, g2: float):
    """Condition pieces: returns (A, b mu) for one obstacle."""
    B = dx * dx + dy * dy - r * r
    Bdot = 2.0 * (dx * vx + dy * vy)
    B1 = Bdot + g1 * B
    A = g1 * Bdot + 2.0 * (vx * vx + vy * vy) + g2 * B1
    s = 2.0 * (dx * mu1 + dy * mu2)
    return A, s


def barrier_terms(z: State, o: Obstacle, r: float, cbf: CbfParams) -> BarrierTerms:
    dx = z.x - o.x
    dy = z.y - o.y
    vx = z.v * math.cos(z.theta)
    vy = z.v * math.sin(z.theta)
    B = dx * dx + dy * dy - r * r
    Bdot = 2.0 * (dx * vx + dy * vy)
    B1 = Bdot + cbf.gamma1 * B
    const = cbf.gamma1 * Bdot + 2.0 * (vx * vx + vy * vy)
    return BarrierTerms(B, Bdot, B1, (const, (2.0 * dx, 2.0 * dy)))


def condition_terms(z: State, o: Obstacle, r: float, cbf: CbfParams):
    """(A, bx, by) of the gate condition A + b mu >= 0 at state z."""
    dx = z.x - o.x
    dy = z.y - o.y
    vx = z.v * math.cos(z.theta)
    vy = z.v * math.sin(z.theta)
    A, _ = _a_and_s(dx, dy, vx, vy, 0.0, 0.0, r, cbf.gamma1, cbf.gamma2)
    return A, 2.0 * dx, 2.0 * dy


def condition_value(z: State, u: Control, o: Obstacle, r: float, cbf: CbfParams) -> float:
    """Value of B1' + gamma2 B1 for a held physical control."""
    dx = z.x - o.x
    dy = z.y - o.y
    vx = z.v * math.cos(z.theta)
    vy = z.v * math.sin(z.theta)
    mu1, mu2 = pseudo_accel(z, u)
    A, s = _a_and_s(dx, dy, vx, vy, mu1, mu2, r, cbf.gamma1, cbf.gamma2)
    return A + s


def kbf_check(z: State, u: Control, o: Obstacle, r: float, cbf: CbfParams) -> bool:
    """Nominal gate: True (pass) iff the barrier condition holds at (z, u)."""
    return condition_value(z, u, o, r, cbf) >= 0.0


def robust_terms(z: State, o: Obstacle, r: float, cbf: CbfParams,
                 bounds: UncertaintyBounds) -> RobustTerms:
    dx = z.x - o.x
    dy = z.y - o.y
    vx = z.v * math.cos(z.theta)
    vy = z.v * math.sin(z.theta)
    A, _ = _a_and_s(dx, dy, vx, vy, 0.0, 0.0, r, cbf.gamma1, cbf.gamma2)
    bx = 2.0 * dx
    by = 2.0 * dy
    d1 = bounds.delta1_max
    d2 = bounds.delta2_max
    psi0 = A - d1 * (abs(bx) + abs(by))
    return RobustTerms(A, (bx, by), psi0,
                       (bx * (1.0 + d2), by * (1.0 + d2)),
                       (bx * (1.0 - d2), by * (1.0 - d2)))


def robust_worst_value(z: State, u: Control, o: Obstacle, r: float,
                       cbf: CbfParams, bounds: UncertaintyBounds) -> float:
    """Worst value of the gate condition over the uncertainty box."""
    dx = z.x - o.x
    dy = z.y - o.y
    vx = z.v * math.cos(z.theta)
    vy = z.v * math.sin(z.theta)
    mu1, mu2 = pseudo_accel(z, u)
    A, s = _a_and_s(dx, dy, vx, vy, mu1, mu2, r, cbf.gamma1, cbf.gamma2)
    psi0 = A - bounds.delta1_max * (abs(2.0 * dx) + abs(2.0 * dy))
    sp = s * (1.0 + bounds.delta2_max)
    sn = s * (1.0 - bounds.delta2_max)
    return psi0 + (sp if sp < sn else sn)


def robust_kbf_check(z: State, u: Control, o: Obstacle, r: float,
                     cbf: CbfParams, bounds: UncertaintyBounds) -> bool:
    """Robust gate: True iff the condition survives the worst model mismatch."""
    return robust_worst_value(z, u, o, r, cbf, bounds) >= 0.0


def sample_control(rng, p: RobotParams) -> Control:
    """Draw a control uniformly over the admissible box.

    Curvature is symmetric about zero; acceleration is forward-only, which is
    what keeps planner speeds nonnegative.
    """
    cmax = p.c_max
    c = rng.uniform(-cmax, cmax)
    a = rng.uniform(0.0, p.a_max)
    return Control(c, a)
