import numpy as np
import pytest

from sgflow.sgf import (ClassKappaSpec, FunctionalNlp, QpInfeasibleError,
                        SgfEngine, flow_to_convergence, nlp_kkt_residual,
                        sgf_direction)

KAPPA = ClassKappaSpec()


def quadratic_with_halfspace(target, normal, offset):
    """min 1/2 ||w - target||^2  s.t.  normal . w <= offset."""
    target = np.asarray(target, dtype=float)
    normal = np.asarray(normal, dtype=float)

    def cost(w):
        return 0.5 * float((w - target) @ (w - target)), w - target

    def ineq(w):
        return np.array([normal @ w - offset]), normal[None, :]

    return FunctionalNlp(target.size, cost, ineq)


def test_alpha_kinds():
    k = ClassKappaSpec(ineq_kind="linear", ineq_gain=3.0, ineq_rate=10.0)
    assert k.alpha_ineq(0.5) == pytest.approx(1.5)
    k = ClassKappaSpec(ineq_kind="shifted_exponential", ineq_gain=20.0,
                       ineq_rate=10.0)
    assert k.alpha_ineq(0.0) == pytest.approx(0.0)
    assert k.alpha_ineq(0.1) == pytest.approx(20.0 * (np.exp(1.0) - 1.0))
    k = ClassKappaSpec(ineq_kind="exponential")
    assert k.alpha_ineq(0.0) == pytest.approx(20.0)   # positive at the boundary
    # Clamping guards the QP right-hand side against overflow.
    assert ClassKappaSpec().alpha_ineq(100.0) == pytest.approx(1e6)
    assert ClassKappaSpec().alpha_ineq(-100.0) == pytest.approx(-20.0)


def test_alpha_validation():
    with pytest.raises(ValueError):
        ClassKappaSpec(ineq_kind="cubic")
    with pytest.raises(ValueError):
        ClassKappaSpec(ineq_gain=0.0)


def test_interior_direction_is_negative_gradient():
    nlp = quadratic_with_halfspace([0.0, 0.0], [1.0, 0.0], 10.0)
    res = sgf_direction(nlp, np.array([1.0, -2.0]), KAPPA)
    assert np.allclose(res.direction, [-1.0, 2.0])
    assert res.mu == pytest.approx([0.0])


def test_boundary_optimum_multiplier():
    # Target outside the halfspace w_0 <= 0; at the constrained optimum
    # w = (0, 0) stationarity requires mu = 1 and the flow must stall.
    nlp = quadratic_with_halfspace([1.0, 0.0], [1.0, 0.0], 0.0)
    res = sgf_direction(nlp, np.zeros(2), KAPPA)
    assert res.mu == pytest.approx([1.0], rel=1e-8)
    assert np.abs(res.direction).max() <= 1e-8
    assert nlp_kkt_residual(nlp, np.zeros(2), res.mu, res.nu) <= 1e-8


def test_flow_converges_to_constrained_optimum():
    # Near the boundary the barrier rate contributes a stiffness of roughly
    # gain * rate = 200, so the Euler step must satisfy xi < 2/201.
    nlp = quadratic_with_halfspace([2.0, 1.0], [1.0, 0.0], 0.0)
    res = flow_to_convergence(nlp, np.array([-1.0, -1.0]), KAPPA,
                              xi=1e-3, tol=1e-8, max_iters=50000)
    assert res.converged
    assert res.w == pytest.approx([0.0, 1.0], abs=1e-6)
    assert res.kkt_residual <= 1e-6


def test_flow_with_equality_constraint():
    # min 1/2 ||w||^2 on the line w_0 + w_1 = 2.
    def cost(w):
        return 0.5 * float(w @ w), w

    def eq(w):
        return np.array([w[0] + w[1] - 2.0]), np.array([[1.0, 1.0]])

    nlp = FunctionalNlp(2, cost, eq=eq)
    res = flow_to_convergence(nlp, np.array([5.0, -3.0]), KAPPA,
                              xi=1e-2, tol=1e-10, max_iters=20000)
    assert res.converged
    assert res.w == pytest.approx([1.0, 1.0], abs=1e-6)


def test_flow_restores_equality_from_violation():
    def cost(w):
        return 0.0, np.zeros(2)

    def eq(w):
        return np.array([w[0] - 1.0]), np.array([[1.0, 0.0]])

    nlp = FunctionalNlp(2, cost, eq=eq)
    engine = SgfEngine(KAPPA)
    w = np.array([3.0, 0.0])
    h0 = 2.0
    for _ in range(200):
        w = engine.step(nlp, w, 1e-2)
    assert abs(w[0] - 1.0) < h0 * np.exp(-0.5 * 200 * 1e-2 * KAPPA.eq_gain)


def test_zero_gradient_row_dropped_when_inactive():
    # g(w) = w_0^2 - 1 has zero gradient at w_0 = 0 but is strictly
    # satisfied there, so the row is discarded rather than fatal.
    def cost(w):
        return 0.5 * float(w @ w), w

    def ineq(w):
        return np.array([w[0] ** 2 - 1.0]), np.array([[2.0 * w[0], 0.0]])

    nlp = FunctionalNlp(2, cost, ineq)
    res = sgf_direction(nlp, np.array([0.0, 1.0]), KAPPA)
    assert res.dropped_rows == (0,)
    assert np.allclose(res.direction, [0.0, -1.0])


def test_zero_gradient_row_fatal_when_active():
    def cost(w):
        return 0.5 * float(w @ w), w

    def ineq(w):
        return np.array([w[0] ** 2]), np.array([[2.0 * w[0], 0.0]])

    nlp = FunctionalNlp(2, cost, ineq)
    with pytest.raises(QpInfeasibleError):
        sgf_direction(nlp, np.array([0.0, 1.0]), KAPPA)


def test_kkt_residual_components():
    nlp = quadratic_with_halfspace([1.0, 0.0], [1.0, 0.0], 0.0)
    # Wrong multiplier leaves a stationarity residual of 1.
    res = nlp_kkt_residual(nlp, np.zeros(2), [0.0], np.zeros(0))
    assert res == pytest.approx(1.0)
    with pytest.raises(ValueError):
        nlp_kkt_residual(nlp, np.zeros(2), [0.0, 0.0], np.zeros(0))


def test_step_requires_positive_xi():
    nlp = quadratic_with_halfspace([0.0, 0.0], [1.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        SgfEngine(KAPPA).step(nlp, np.zeros(2), 0.0)
