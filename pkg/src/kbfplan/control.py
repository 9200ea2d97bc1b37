"""Lyapunov-based tracking control: gain synthesis and the QP feedback laws.

The tracking error e = x_ref - x obeys the double-integrator error dynamics
de/dt = F e + G mu with F = [[0, I], [0, 0]], G = [0; I]. Closing the loop
with mu = [-K_P -K_D] e gives A_cl = [[0, I], [-K_P, -K_D]]; the quadratic
form V = e'Pe with A_cl' P + P A_cl = -Q certifies its stability, and the
decrease condition

    LfV + LgV mu + e'Qe <= 0

is imposed as a QP row. The obstacle-avoidance controller keeps the barrier
rows hard and relaxes the decrease row by a slack d >= 0 penalized in the
cost, so safety always wins over tracking when the two conflict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CbfParams, ClfParams, Obstacle, RobotParams, State, combined_radius
from .dynamics import ErrorState, PseudoControl, TransformedState, pd_control, transform
from .qp import ActiveSetQp, QpProblem, QpStatus
from .safety import condition_terms

_LYAP_RESIDUAL_TOL = 1e-10


class NotHurwitz(ValueError):
    """Closed-loop matrix has an eigenvalue with nonnegative real part."""


class InfeasibleSafety(RuntimeError):
    """The barrier rows (with relaxed tracking row) admit no pseudo-control."""


@dataclass(frozen=True, eq=False)
class ClfData:
    """Synthesized Lyapunov data for one gain setting."""

    P_lyap: np.ndarray  # 4x4, symmetric positive definite
    F: np.ndarray       # 4x4 error-dynamics drift
    G: np.ndarray       # 4x2 error-dynamics input map
    A_cl: np.ndarray    # 4x4 closed-loop matrix
    M: np.ndarray       # F'P + PF, cached for the Lie derivative
    PG: np.ndarray      # P G, cached for the input Lie derivative


@dataclass(frozen=True)
class ClfTerms:
    V: float
    LfV: float
    LgV: tuple[float, float]


def solve_lyapunov(clf: ClfParams) -> ClfData:
    """Solve A_cl' P + P A_cl = -Q for P by vectorizing to a 16x16 system."""
    I2 = np.eye(2)
    Z2 = np.zeros((2, 2))
    A = np.block([[Z2, I2], [-clf.K_P, -clf.K_D]])
    if np.any(np.linalg.eigvals(A).real >= 0.0):
        raise NotHurwitz(f"closed-loop spectrum not strictly stable for gains "
                         f"K_P={clf.K_P.tolist()}, K_D={clf.K_D.tolist()}")
    I4 = np.eye(4)
    lhs = np.kron(A.T, I4) + np.kron(I4, A.T)
    P = np.linalg.solve(lhs, (-clf.Q).reshape(16)).reshape(4, 4)
    P = 0.5 * (P + P.T)
    residual = np.max(np.abs(A.T @ P + P @ A + clf.Q))
    if residual > _LYAP_RESIDUAL_TOL:
        raise ArithmeticError(f"Lyapunov solve residual {residual:.3e} exceeds tolerance")
    F = np.block([[Z2, I2], [Z2, Z2]])
    G = np.vstack([Z2, I2])
    return ClfData(P_lyap=P, F=F, G=G, A_cl=A, M=F.T @ P + P @ F, PG=P @ G)


def clf_terms(e: ErrorState, d: ClfData) -> ClfTerms:
    """V, LfV and LgV at the given error."""
    ea = np.asarray(e.e)
    V = float(ea @ d.P_lyap @ ea)
    LfV = float(ea @ d.M @ ea)
    lg = 2.0 * (ea @ d.PG)
    return ClfTerms(V, LfV, (float(lg[0]), float(lg[1])))


def clf_qp_control(e: ErrorState, d: ClfData, clf: ClfParams,
                   solver: ActiveSetQp | None = None) -> PseudoControl:
    """Tracking-only controller: min ||mu - mu_pd||^2 s.t. the decrease row.

    The PD law satisfies the decrease row with equality by construction, so
    this returns mu_pd whenever that row is the only constraint; the QP form
    exists so extra rows can be layered on top.
    """
    if solver is None:
        solver = ActiveSetQp()
    mu_pd = pd_control(e, clf)
    t = clf_terms(e, d)
    ea = np.asarray(e.e)
    eqe = float(ea @ clf.Q @ ea)
    prob = QpProblem(
        H=2.0 * np.eye(2),
        f=np.array([-2.0 * mu_pd.mu[0], -2.0 * mu_pd.mu[1]]),
        A_ineq=np.array([[t.LgV[0], t.LgV[1]]]),
        b_ineq=np.array([-t.LfV - eqe]),
    )
    sol = solver.solve(prob)
    if sol.status is not QpStatus.OPTIMAL:
        raise InfeasibleSafety(f"tracking QP returned {sol.status.value}")
    return PseudoControl((float(sol.x[0]), float(sol.x[1])))


def clf_cbf_qp_control(z: State, x_rm: TransformedState, obstacles,
                       robot: RobotParams, cbf: CbfParams, clf: ClfParams,
                       d: ClfData, solver: ActiveSetQp | None = None,
                       mu_rm: tuple[float, float] = (0.0, 0.0),
                       sensing_radius: float | None = None
                       ) -> tuple[PseudoControl, float]:
    """Safety-filtered tracking controller.

    Decision variables are the error-system pseudo-control (mu1, mu2) and the
    decrease-row slack dd. One hard barrier row is added per obstacle (all of
    them by default, or only those whose center is within sensing_radius).
    The barrier condition constrains the plant acceleration mu_rm - mu, where
    mu_rm is the reference feedforward acceleration.

    Returns (error-system pseudo-control, slack). The caller maps to the
    plant via mu_plant = mu_rm - mu and then io_linearize. Raises
    InfeasibleSafety when the rows admit no solution.
    """
    if solver is None:
        solver = ActiveSetQp()
    x = transform(z)
    e = ErrorState((x_rm.x1[0] - x.x1[0], x_rm.x1[1] - x.x1[1],
                    x_rm.x2[0] - x.x2[0], x_rm.x2[1] - x.x2[1]))
    mu_pd = pd_control(e, clf)
    t = clf_terms(e, d)
    ea = np.asarray(e.e)
    eqe = float(ea @ clf.Q @ ea)

    rows = [[t.LgV[0], t.LgV[1], -1.0],  # decrease row, relaxed by the slack
            [0.0, 0.0, -1.0]]            # slack nonnegativity
    rhs = [-t.LfV - eqe, 0.0]
    for o in obstacles:
        if sensing_radius is not None:
            if math.hypot(z.x - o.x, z.y - o.y) > sensing_radius:
                continue
        A_val, bx, by = condition_terms(z, o, combined_radius(o, robot), cbf)
        # A + b (mu_rm - mu) >= 0  ->  b mu <= A + b mu_rm
        rows.append([bx, by, 0.0])
        rhs.append(A_val + bx * mu_rm[0] + by * mu_rm[1])

    penalty = clf.penalty
    prob = QpProblem(
        H=np.diag([2.0, 2.0, 2.0 * penalty]),
        f=np.array([-2.0 * mu_pd.mu[0], -2.0 * mu_pd.mu[1], 0.0]),
        A_ineq=np.array(rows),
        b_ineq=np.array(rhs),
    )
    sol = solver.solve(prob)
    if sol.status is not QpStatus.OPTIMAL:
        raise InfeasibleSafety(f"safety-filtered QP returned {sol.status.value} "
                               f"at state ({z.x:.3f}, {z.y:.3f}, v={z.v:.3f})")
    return PseudoControl((float(sol.x[0]), float(sol.x[1]))), max(0.0, float(sol.x[2]))
