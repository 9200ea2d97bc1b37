import numpy as np
import pytest

from oracles import random_qp, solve_qp_enumeration

from kbfplan.qp import ActiveSetQp, QpProblem, QpSolution, QpStatus, solve_qp


def test_unconstrained_minimum():
    sol = solve_qp(QpProblem(2.0 * np.eye(2), [-4.0, 0.0], np.zeros((0, 2)), []))
    assert sol.status is QpStatus.OPTIMAL
    assert np.allclose(sol.x, [2.0, 0.0])
    assert sol.objective == pytest.approx(-4.0)
    assert sol.active_set == ()


def test_halfline_projection():
    # min (x-2)^2 s.t. x <= 1
    sol = solve_qp(QpProblem([[2.0]], [-4.0], [[1.0]], [1.0]))
    assert sol.status is QpStatus.OPTIMAL
    assert sol.x[0] == pytest.approx(1.0)
    assert sol.active_set == (0,)
    assert sol.multipliers[0] == pytest.approx(2.0)


def test_matches_enumeration_oracle():
    rng = np.random.default_rng(42)
    for k in range(1000):
        H, f, A, b = random_qp(rng, force_infeasible=(k % 5 == 4))
        oracle = solve_qp_enumeration(H, f, A, b)
        sol = solve_qp(QpProblem(H, f, A, b))
        if oracle is None:
            assert sol.status is QpStatus.INFEASIBLE, f"instance {k}"
        else:
            assert sol.status is QpStatus.OPTIMAL, f"instance {k}"
            assert np.max(np.abs(sol.x - oracle[0])) <= 1e-8, f"instance {k}"
            assert abs(sol.objective - oracle[1]) <= 1e-8, f"instance {k}"


def test_kkt_conditions_at_optimum():
    rng = np.random.default_rng(7)
    for _ in range(200):
        H, f, A, b = random_qp(rng)
        sol = solve_qp(QpProblem(H, f, A, b))
        if sol.status is not QpStatus.OPTIMAL:
            continue
        if len(b):
            assert np.all(A @ sol.x - b <= 1e-8)
        lam = np.zeros(len(b))
        for i, v in zip(sol.active_set, sol.multipliers):
            assert v >= -1e-9
            lam[i] = v
        stationarity = H @ sol.x + f + (A.T @ lam if len(b) else 0.0)
        assert np.max(np.abs(stationarity)) <= 1e-8


def test_optimum_dominates_random_feasible_points():
    rng = np.random.default_rng(11)
    H, f, A, b = random_qp(rng, n_max=3, m_max=4)
    while len(b) == 0:
        H, f, A, b = random_qp(rng, n_max=3, m_max=4)
    sol = solve_qp(QpProblem(H, f, A, b))
    assert sol.status is QpStatus.OPTIMAL
    n = len(f)
    tried = 0
    for _ in range(10_000):
        x = sol.x + rng.normal(scale=2.0, size=n)
        if np.all(A @ x - b <= 0.0):
            tried += 1
            obj = 0.5 * (x @ H @ x) + f @ x
            assert sol.objective <= obj + 1e-8
    assert tried > 100  # the sampler actually exercised the feasible set


def test_active_set_stable_under_dual_shift():
    # shifting f along the active normals with multipliers strictly inside
    # (0, lambda*) keeps the same KKT point and active set
    rng = np.random.default_rng(13)
    checked = 0
    while checked < 50:
        H, f, A, b = random_qp(rng, n_max=3, m_max=4)
        sol = solve_qp(QpProblem(H, f, A, b))
        if sol.status is not QpStatus.OPTIMAL or not sol.active_set:
            continue
        if min(sol.multipliers) < 1e-6:
            continue  # skip degenerate instances
        lam_hat = 0.5 * np.array(sol.multipliers)
        f2 = f + A[list(sol.active_set)].T @ lam_hat
        sol2 = solve_qp(QpProblem(H, f2, A, b))
        assert sol2.status is QpStatus.OPTIMAL
        assert sol2.active_set == sol.active_set
        assert np.allclose(sol2.x, sol.x, atol=1e-8)
        checked += 1


def test_deterministic_solutions():
    rng = np.random.default_rng(17)
    for _ in range(50):
        H, f, A, b = random_qp(rng)
        s1 = solve_qp(QpProblem(H, f, A, b))
        s2 = solve_qp(QpProblem(H, f, A, b))
        assert s1.status == s2.status
        if s1.status is QpStatus.OPTIMAL:
            assert np.array_equal(s1.x, s2.x)
            assert s1.objective == s2.objective
            assert s1.active_set == s2.active_set


def test_infeasible_detection():
    # x <= 0 and -x <= -1 cannot both hold
    sol = solve_qp(QpProblem([[2.0]], [0.0], [[1.0], [-1.0]], [0.0, -1.0]))
    assert sol.status is QpStatus.INFEASIBLE
    assert sol.x is None


def test_iteration_limit_reported():
    H = np.eye(2)
    f = np.array([-10.0, -10.0])
    A = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    b = np.array([1.0, 1.0, 1.5])
    sol = ActiveSetQp().solve(QpProblem(H, f, A, b), max_iter=0)
    assert sol.status is QpStatus.ITER_LIMIT


def test_warm_start_agrees_with_cold():
    rng = np.random.default_rng(19)
    solver = ActiveSetQp()
    for _ in range(100):
        H, f, A, b = random_qp(rng, n_max=3, m_max=4)
        warm = solver.solve(QpProblem(H, f, A, b))
        cold = solve_qp(QpProblem(H, f, A, b))
        assert warm.status == cold.status
        if warm.status is QpStatus.OPTIMAL:
            assert np.allclose(warm.x, cold.x, atol=1e-8)
            assert warm.objective == pytest.approx(cold.objective, abs=1e-8)


def test_clone_is_independent():
    solver = ActiveSetQp()
    solver.solve(QpProblem([[2.0]], [-4.0], [[1.0]], [1.0]))
    other = solver.clone()
    assert other._warm == solver._warm == (0,)
    # a solve whose constraint stays slack clears the clone's working set only
    other.solve(QpProblem([[2.0]], [0.0], [[1.0]], [5.0]))
    assert other._warm == ()
    assert solver._warm == (0,)


def test_problem_shape_validation():
    with pytest.raises(ValueError):
        QpProblem([[1.0, 2.0], [0.0, 1.0]], [0.0, 0.0], np.zeros((0, 2)), [])
    with pytest.raises(ValueError):
        QpProblem(np.eye(2), [0.0, 0.0], [[1.0, 0.0]], [1.0, 2.0])
