"""Dense active-set solver for the small convex QPs built by the controllers.

Problems have at most a handful of variables and inequality rows, and the
same instance shape is re-solved every controller tick, so a dual active-set
method (Goldfarb-Idnani scheme) with a warm-started working set beats any
general-purpose solver here by a wide margin.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

_VIOL_TOL = 1e-10   # constraint slack treated as satisfied
_Z_TOL = 1e-12      # primal step direction considered zero below this
_R_TOL = 1e-12      # dual direction entries considered nonpositive below this
_MULT_TOL = 1e-9    # multiplier negativity tolerated on the warm-start path


class QpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITER_LIMIT = "iter_limit"


@dataclass(frozen=True)
class QpProblem:
    """min 0.5 x'Hx + f'x  subject to  A_ineq x <= b_ineq."""

    H: np.ndarray
    f: np.ndarray
    A_ineq: np.ndarray
    b_ineq: np.ndarray

    def __post_init__(self) -> None:
        f = np.asarray(self.f, dtype=float).ravel()
        n = f.shape[0]
        H = np.asarray(self.H, dtype=float).reshape(n, n)
        if not np.allclose(H, H.T, atol=1e-12, rtol=0.0):
            raise ValueError("H must be symmetric")
        A = np.asarray(self.A_ineq, dtype=float).reshape(-1, n)
        b = np.asarray(self.b_ineq, dtype=float).ravel()
        if A.shape[0] != b.shape[0]:
            raise ValueError(f"A_ineq has {A.shape[0]} rows but b_ineq has {b.shape[0]}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "A_ineq", A)
        object.__setattr__(self, "b_ineq", b)


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray | None
    objective: float
    status: QpStatus
    active_set: tuple[int, ...]
    multipliers: tuple[float, ...]  # aligned with active_set, >= 0
    iterations: int                 # working-set changes performed


class ActiveSetQp:
    """Dual active-set solver for strictly convex inequality-constrained QPs.

    Iteration starts at the unconstrained minimizer -H^{-1}f and repeatedly
    pulls in the most violated constraint (lowest index on ties), taking the
    largest step that keeps all working-set multipliers nonnegative; a
    constraint whose multiplier would cross zero is dropped first. When the
    incoming constraint normal lies in the span of the working set and no
    multiplier can give way, the dual is unbounded, which certifies primal
    infeasibility (Farkas direction).

    The working set of the last optimal solve is retained and tried first on
    the next call, so repeated solves of slowly varying instances usually
    cost a single KKT solve. Instances are cheap to clone and must not be
    shared across threads.
    """

    def __init__(self, max_iter: int = 100):
        self.max_iter = max_iter
        self._warm: tuple[int, ...] = ()

    def clone(self) -> "ActiveSetQp":
        other = ActiveSetQp(self.max_iter)
        other._warm = self._warm
        return other

    def solve(self, prob: QpProblem, max_iter: int | None = None) -> QpSolution:
        limit = self.max_iter if max_iter is None else max_iter
        H, f, A, b = prob.H, prob.f, prob.A_ineq, prob.b_ineq
        m = A.shape[0]

        if m and self._warm and all(i < m for i in self._warm):
            warm = self._solve_working_set(prob, self._warm)
            if warm is not None:
                return warm

        x = np.linalg.solve(H, -f)
        if m == 0:
            return self._optimal(prob, x, [], [], 0)

        W: list[int] = []
        lam: list[float] = []
        changes = 0
        while True:
            viol = A @ x - b
            p = -1
            worst = _VIOL_TOL
            for i in range(m):
                if viol[i] > worst and i not in W:
                    worst = viol[i]
                    p = i
            if p < 0:
                return self._optimal(prob, x, W, lam, changes)

            n_p = -A[p]  # inward normal of the incoming constraint
            lam_p = 0.0
            while True:
                if changes >= limit:
                    return QpSolution(None, math.nan, QpStatus.ITER_LIMIT,
                                      tuple(W), tuple(lam), changes)
                hn = np.linalg.solve(H, n_p)
                if W:
                    N = -A[W].T
                    HN = np.linalg.solve(H, N)
                    r = np.linalg.solve(N.T @ HN, N.T @ hn)
                    z = hn - HN @ r
                else:
                    r = np.zeros(0)
                    z = hn
                # distance to feasibility of p along z, infinite if z vanishes
                zn = float(n_p @ z)
                s_p = float(n_p @ x) + b[p]  # negative while p is violated
                step_add = -s_p / zn if zn > _Z_TOL else math.inf
                # largest step before some working multiplier hits zero
                step_drop = math.inf
                k_drop = -1
                for j in range(len(W)):
                    rj = float(r[j])
                    if rj > _R_TOL:
                        ratio = lam[j] / rj
                        if ratio < step_drop:
                            step_drop = ratio
                            k_drop = j
                step = step_add if step_add < step_drop else step_drop
                if step == math.inf:
                    return QpSolution(None, math.nan, QpStatus.INFEASIBLE,
                                      tuple(W), tuple(lam), changes)
                for j in range(len(W)):
                    lam[j] -= step * float(r[j])
                lam_p += step
                if step_add <= step_drop:
                    x = x + step_add * z
                    W.append(p)
                    lam.append(lam_p)
                    changes += 1
                    break
                if step_add < math.inf:
                    x = x + step * z
                del W[k_drop]
                del lam[k_drop]
                changes += 1

    # -- helpers ------------------------------------------------------------

    def _solve_working_set(self, prob: QpProblem, W: tuple[int, ...]) -> QpSolution | None:
        """Try a candidate active set directly; return its KKT point if valid."""
        H, f, A, b = prob.H, prob.f, prob.A_ineq, prob.b_ineq
        n = f.shape[0]
        idx = list(W)
        Aw = A[idx]
        k = len(idx)
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = H
        kkt[:n, n:] = Aw.T
        kkt[n:, :n] = Aw
        rhs = np.concatenate([-f, b[idx]])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            return None
        x = sol[:n]
        mult = sol[n:]
        if np.any(mult < -_MULT_TOL):
            return None
        if np.any(A @ x - b > _VIOL_TOL):
            return None
        return self._optimal(prob, x, idx, [max(0.0, float(v)) for v in mult], 0)

    def _optimal(self, prob: QpProblem, x: np.ndarray, W: list[int],
                 lam: list[float], iters: int) -> QpSolution:
        pairs = sorted(zip(W, lam))
        active = tuple(i for i, _ in pairs)
        mults = tuple(float(v) for _, v in pairs)
        obj = float(0.5 * (x @ prob.H @ x) + prob.f @ x)
        self._warm = active
        return QpSolution(x, obj, QpStatus.OPTIMAL, active, mults, iters)


def solve_qp(prob: QpProblem, max_iter: int = 100) -> QpSolution:
    """One-shot solve with a fresh solver (no warm start)."""
    return ActiveSetQp(max_iter).solve(prob)
