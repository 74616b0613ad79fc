import numpy as np
import pytest

from sgflow import oracles
from sgflow.checks import random_qp
from sgflow.qp import (INFEASIBLE, MAX_ITER, OPTIMAL, ActiveSetQp, QpProblem,
                       kkt_residual, solve)


def test_unconstrained_quadratic():
    qp = QpProblem(np.diag([2.0, 4.0]), np.array([-2.0, -8.0]))
    sol = solve(qp)
    assert sol.status == OPTIMAL
    assert sol.y == pytest.approx([1.0, 2.0], rel=1e-9)
    assert sol.kkt_residual <= 1e-10


def test_single_active_inequality():
    # min 1/2 (y-1)^2  s.t.  y <= 0  ->  y = 0 with multiplier 1.
    qp = QpProblem(np.array([[1.0]]), np.array([-1.0]),
                   np.array([[1.0]]), np.array([0.0]))
    sol = solve(qp)
    assert sol.status == OPTIMAL
    assert sol.y == pytest.approx([0.0], abs=1e-10)
    assert sol.ineq_mult == pytest.approx([1.0], rel=1e-8)
    assert sol.active_set == (0,)


def test_inactive_inequality():
    qp = QpProblem(np.array([[1.0]]), np.array([-1.0]),
                   np.array([[1.0]]), np.array([5.0]))
    sol = solve(qp)
    assert sol.y == pytest.approx([1.0], rel=1e-9)
    assert sol.ineq_mult == pytest.approx([0.0], abs=1e-10)


def test_equality_constrained():
    # min 1/2 ||y||^2  s.t.  y_0 + y_1 = 2  ->  (1, 1), nu = -1.
    qp = QpProblem(np.eye(2), np.zeros(2),
                   eq_mat=np.array([[1.0, 1.0]]), eq_rhs=np.array([2.0]))
    sol = solve(qp)
    assert sol.y == pytest.approx([1.0, 1.0], rel=1e-10)
    assert sol.eq_mult == pytest.approx([-1.0], rel=1e-10)


def test_infeasible_inequalities_detected():
    # y <= -1 together with -y <= -2 (i.e. y >= 2) is empty.
    qp = QpProblem(np.array([[1.0]]), np.zeros(1),
                   np.array([[1.0], [-1.0]]), np.array([-1.0, -2.0]))
    sol = solve(qp)
    assert sol.status == INFEASIBLE


def test_rank_deficient_gram_hessian():
    # Gram structure M M' with dependent rows; Tikhonov keeps it solvable.
    m = np.array([[1.0, 2.0], [2.0, 4.0]])
    qp = QpProblem(m @ m.T, np.array([1.0, 2.0]))
    sol = solve(qp)
    assert sol.status == OPTIMAL
    assert sol.kkt_residual <= 1e-6


def test_objective_scaling_invariance():
    rng = np.random.default_rng(11)
    base = random_qp(rng)
    ref = solve(base)
    for s in (1e-3, 1e3):
        scaled = QpProblem(s * base.hess, s * base.lin,
                           base.ineq_mat.copy(), base.ineq_rhs.copy(),
                           base.eq_mat.copy(), base.eq_rhs.copy())
        sol = solve(scaled)
        assert sol.status == OPTIMAL
        assert sol.y == pytest.approx(ref.y, rel=1e-6, abs=1e-8)


def test_warm_start_agrees_with_cold_start():
    rng = np.random.default_rng(12)
    solver = ActiveSetQp()
    for _ in range(50):
        qp = random_qp(rng)
        warm = solver.solve(qp)           # reuses the previous active set
        cold = solve(qp)
        assert warm.status == cold.status == OPTIMAL
        assert warm.y == pytest.approx(cold.y, abs=1e-7)


def test_oracle_agreement_batch():
    rng = np.random.default_rng(13)
    for _ in range(100):
        qp = random_qp(rng)
        sol = solve(qp)
        ref = oracles.enumerate_qp(qp)
        assert sol.status == OPTIMAL and ref is not None
        y_ref, _, _ = ref
        assert np.abs(sol.y - y_ref).max() <= 1e-6
        assert abs(qp.objective(sol.y) - qp.objective(y_ref)) <= 1e-8
        assert kkt_residual(qp, sol) <= 1e-8


def test_kkt_residual_flags_bad_point():
    qp = QpProblem(np.eye(2), np.array([1.0, 0.0]))
    good = solve(qp)
    assert kkt_residual(qp, good) <= 1e-10
    bad = solve(qp)
    bad.y = bad.y + 0.5
    assert kkt_residual(qp, bad) >= 0.4


def test_problem_validation():
    with pytest.raises(ValueError):
        QpProblem(np.array([[1.0, 0.5], [0.0, 1.0]]), np.zeros(2))
    with pytest.raises(ValueError):
        QpProblem(np.eye(2), np.zeros(3))
    with pytest.raises(ValueError):
        QpProblem(np.eye(2), np.zeros(2), np.ones((1, 3)), np.ones(1))
