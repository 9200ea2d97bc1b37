"""Bicycle-model kinematics, the flat double-integrator form, and integrators.

State z = (x, y, theta, v) with inputs u = (c, a), c = tan(psi)/L:

    dx/dt = v cos(theta),  dy/dt = v sin(theta),
    dtheta/dt = v c,       dv/dt = a.

In the transformed coordinates x1 = (x, y), x2 = (v cos(theta), v sin(theta))
the acceleration is affine in the input, d(x2)/dt = g(z) u with

    g(z) = [[-v^2 sin(theta), cos(theta)],
            [ v^2 cos(theta), sin(theta)]],   det g = -v^2,

so a desired acceleration pair mu maps back to a physical input through
u = g(z)^{-1} mu (decoupling is singular at standstill).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ClfParams, Control, RobotParams, State

V_EPS = 0.05  # m/s, regularization floor when inverting the decoupling matrix


class SingularDecoupling(ArithmeticError):
    """Decoupling matrix is singular (v below threshold) with regularization off."""


@dataclass(frozen=True)
class TransformedState:
    x1: tuple[float, float]  # position, m
    x2: tuple[float, float]  # velocity, m/s


@dataclass(frozen=True)
class PseudoControl:
    mu: tuple[float, float]  # commanded acceleration pair, m/s^2


@dataclass(frozen=True)
class ErrorState:
    """Reference-minus-plant error in transformed coordinates."""

    e: tuple[float, float, float, float]  # (pos error pair, vel error pair)

    @property
    def pos(self) -> tuple[float, float]:
        return (self.e[0], self.e[1])

    @property
    def vel(self) -> tuple[float, float]:
        return (self.e[2], self.e[3])


def state_derivative(z: State, u: Control) -> tuple[float, float, float, float]:
    """Time derivative (dx, dy, dtheta, dv) of the bicycle model."""
    return (z.v * math.cos(z.theta), z.v * math.sin(z.theta), z.v * u.c, u.a)


def _deriv(x: float, y: float, theta: float, v: float, c: float, a: float):
    return (v * math.cos(theta), v * math.sin(theta), v * c, a)


def integrate_step(z: State, u: Control, dt: float, p: RobotParams,
                   method: str = "rk4") -> State:
    """Advance the state one step under a held control.

    The resulting speed is clamped to [0, v_max] and the heading renormalized.
    """
    c, a = u.c, u.a
    if method == "euler":
        d = _deriv(z.x, z.y, z.theta, z.v, c, a)
        nx = z.x + dt * d[0]
        ny = z.y + dt * d[1]
        nth = z.theta + dt * d[2]
        nv = z.v + dt * d[3]
    elif method == "rk4":
        k1 = _deriv(z.x, z.y, z.theta, z.v, c, a)
        h = 0.5 * dt
        k2 = _deriv(z.x + h * k1[0], z.y + h * k1[1], z.theta + h * k1[2], z.v + h * k1[3], c, a)
        k3 = _deriv(z.x + h * k2[0], z.y + h * k2[1], z.theta + h * k2[2], z.v + h * k2[3], c, a)
        k4 = _deriv(z.x + dt * k3[0], z.y + dt * k3[1], z.theta + dt * k3[2], z.v + dt * k3[3], c, a)
        sixth = dt / 6.0
        nx = z.x + sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        ny = z.y + sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        nth = z.theta + sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        nv = z.v + sixth * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
    else:
        raise ValueError(f"unknown integration method {method!r}")

    if nv < 0.0:
        nv = 0.0
    elif nv > p.v_max:
        nv = p.v_max
    return State(nx, ny, nth, nv)


def transform(z: State) -> TransformedState:
    """Map a physical state to position/velocity pairs."""
    return TransformedState((z.x, z.y),
                            (z.v * math.cos(z.theta), z.v * math.sin(z.theta)))


def g_matrix(z: State) -> tuple[np.ndarray, float]:
    """Decoupling matrix g(z) and its determinant -v^2."""
    s, c = math.sin(z.theta), math.cos(z.theta)
    v2 = z.v * z.v
    g = np.array([[-v2 * s, c], [v2 * c, s]])
    return g, -v2


def io_linearize(z: State, mu: PseudoControl, p: RobotParams, *,
                 v_eps: float = V_EPS, regularize: bool = True,
                 saturate: bool = True) -> Control:
    """Map a commanded acceleration pair to a physical control, u = g^{-1} mu.

    Near standstill the inverse blows up (det g = -v^2); by default g is
    evaluated at v_reg = max(|v|, v_eps) instead. The result is saturated to
    |c| <= tan(psi_max)/L and a in [-a_max, a_max] unless saturate=False.
    """
    v = abs(z.v)
    if v < v_eps:
        if not regularize:
            raise SingularDecoupling(f"decoupling singular at v={z.v}")
        v = v_eps
    s, co = math.sin(z.theta), math.cos(z.theta)
    v2 = v * v
    m1, m2 = mu.mu
    # g^{-1} = [[-sin/v^2, cos/v^2], [cos, sin]]
    c = (-s * m1 + co * m2) / v2
    a = co * m1 + s * m2
    if saturate:
        cmax = p.c_max
        if c > cmax:
            c = cmax
        elif c < -cmax:
            c = -cmax
        if a > p.a_max:
            a = p.a_max
        elif a < -p.a_max:
            a = -p.a_max
    return Control(c, a)


def pd_control(e: ErrorState, clf: ClfParams) -> PseudoControl:
    """Error-system PD law mu_pd = [-K_P -K_D] e."""
    ep = e.pos
    ev = e.vel
    kp = clf.K_P
    kd = clf.K_D
    m1 = -(kp[0, 0] * ep[0] + kp[0, 1] * ep[1]) - (kd[0, 0] * ev[0] + kd[0, 1] * ev[1])
    m2 = -(kp[1, 0] * ep[0] + kp[1, 1] * ep[1]) - (kd[1, 0] * ev[0] + kd[1, 1] * ev[1])
    return PseudoControl((float(m1), float(m2)))
