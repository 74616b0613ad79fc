import math

import numpy as np
import pytest

from sgflow.model import (CostParams, GridSignals, Input, PlantParams, State,
                          continuous_dynamics, current_limit,
                          current_limit_grad, discrete_dynamics,
                          dynamics_jacobians, power_gradients, power_output,
                          stage_cost, stage_cost_grad, terminal_cost,
                          wrap_angle)

PLANT = PlantParams()
GRID = GridSignals()
OMEGA_BASE = PLANT.omega_base


def test_synchronous_idle_is_equilibrium():
    x = State(0.0, 0.0, 0.0)
    u = Input(GRID.e_mag, GRID.omega_e)
    assert np.allclose(continuous_dynamics(x, u, GRID, PLANT), 0.0)


def test_zero_grid_zero_input_is_equilibrium():
    x = State(0.0, 0.0, 0.0)
    u = Input(0.0, 377.0)
    grid = GridSignals(e_mag=0.0, omega_e=377.0)
    assert np.allclose(continuous_dynamics(x, u, grid, PLANT), 0.0)


def test_dynamics_against_high_precision_reference():
    # Frozen values from a 40-digit arbitrary-precision evaluation of the
    # branch equations at the default parameters.
    x = State(0.5, 0.1, 0.2)
    u = Input(1.0, OMEGA_BASE)
    f = continuous_dynamics(x, u, GRID, PLANT)
    ref = np.array([513.55645808820412454, -5605.8360432298463034, 0.0])
    assert np.allclose(f, ref, rtol=1e-12, atol=1e-9)


def test_euler_step_against_high_precision_reference():
    x = State(0.0, 0.0, 0.0)
    u = Input(1.1, 370.0)
    xn = discrete_dynamics(x, u, GRID, PLANT, 1e-3)
    ref = (2.72013241111736709, 0.0, 0.0069911184307751886155)
    assert xn.i_d == pytest.approx(ref[0], rel=1e-12)
    assert xn.i_q == pytest.approx(ref[1], abs=1e-15)
    assert xn.delta == pytest.approx(ref[2], rel=1e-12)


def test_euler_zero_step_is_identity():
    x = State(0.3, -0.2, 0.5)
    u = Input(0.9, 370.0)
    assert discrete_dynamics(x, u, GRID, PLANT, 0.0) == x


def test_rate_constants():
    assert PLANT.decay_rate == pytest.approx(132.71626108022187762, rel=1e-12)
    assert PLANT.drive_gain == pytest.approx(27201.3241111736709, rel=1e-12)


def test_jacobian_structure():
    x = State(0.4, -0.3, 0.1)
    u = Input(1.05, 375.0)
    a_mat, b_mat = dynamics_jacobians(x, u, GRID, PLANT)
    assert a_mat[0, 1] == u.omega            # +omega coupling into i_d
    assert a_mat[1, 0] == -u.omega
    assert a_mat[2, :] == pytest.approx([0.0, 0.0, 0.0])
    assert b_mat[2, 1] == -1.0               # d(delta_dot)/d(omega)
    assert b_mat[0, 0] == PLANT.drive_gain


def test_q_self_coupling_variant():
    plant = PlantParams(q_self_coupling=True)
    x = State(0.4, -0.3, 0.0)
    u = Input(1.0, 380.0)
    f_std = continuous_dynamics(x, u, GRID, PLANT)
    f_alt = continuous_dynamics(x, u, GRID, plant)
    # The variant replaces -omega*i_d with -omega*i_q in the q-axis row.
    assert f_alt[1] - f_std[1] == pytest.approx(-u.omega * (x.i_q - x.i_d))
    a_alt, _ = dynamics_jacobians(x, u, GRID, plant)
    assert a_alt[1, 0] == 0.0


def test_power_against_reference_point():
    x = State(0.5, 0.1, 0.2)
    p, q = power_output(x, GRID)
    assert p == pytest.approx(0.76485033300019040566, rel=1e-12)
    assert q == pytest.approx(0.0019920114201096669259, rel=1e-12)


def test_power_gradient_rotation_identity():
    # The angle sensitivities satisfy dP/ddelta = -Q and dQ/ddelta = P.
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = State(*rng.uniform(-1, 1, 3))
        p, q = power_output(x, GRID)
        grad_p, grad_q = power_gradients(x, GRID)
        assert grad_p[2] == pytest.approx(-q, rel=1e-12, abs=1e-12)
        assert grad_q[2] == pytest.approx(p, rel=1e-12, abs=1e-12)


def test_current_limit_sign_and_gradient():
    assert current_limit(State(0.0, 0.0, 1.0), PLANT) == pytest.approx(-1.0)
    assert current_limit(State(1.0, 0.0, 0.0), PLANT) == pytest.approx(0.0)
    assert current_limit(State(0.8, 0.8, 0.0), PLANT) > 0.0
    g = current_limit_grad(State(0.3, -0.4, 2.0), PLANT)
    assert np.allclose(g, [0.6, -0.8, 0.0])


def test_stage_cost_zero_at_reference_point():
    cost = CostParams(p_ref=0.3, q_ref=-0.1)
    # Construct a state achieving the references exactly at delta = 0.
    x = State(0.3 / (GRID.k_pq * GRID.e_mag), 0.1 / (GRID.k_pq * GRID.e_mag), 0.0)
    u = Input(cost.v_nom, cost.omega_nom)
    assert stage_cost(x, u, GRID, cost) == pytest.approx(0.0, abs=1e-15)
    gx, gu = stage_cost_grad(x, u, GRID, cost)
    assert np.allclose(gu, 0.0)


def test_terminal_cost_drops_input_terms():
    cost = CostParams(p_ref=1.0, q_ref=0.5)
    x = State(0.2, -0.6, 0.3)
    u = Input(cost.v_nom, cost.omega_nom)
    # With inputs at nominal, stage and terminal cost coincide.
    assert terminal_cost(x, GRID, cost) == pytest.approx(
        stage_cost(x, u, GRID, cost))


def test_frequency_deviation_penalized_per_unit():
    cost = CostParams()
    x = State(0.0, 0.0, 0.0)
    u = Input(cost.v_nom, cost.omega_nom + cost.omega_scale)
    # A full per-unit frequency deviation costs 1/2.
    assert stage_cost(x, u, GRID, cost) == pytest.approx(0.5)


def test_wrap_angle():
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi + 0.1) == pytest.approx(-math.pi + 0.1)
    rng = np.random.default_rng(1)
    for d in rng.uniform(-50, 50, 50):
        w = wrap_angle(d)
        assert -math.pi < w <= math.pi
        assert math.cos(w) == pytest.approx(math.cos(d), abs=1e-12)
        assert math.sin(w) == pytest.approx(math.sin(d), abs=1e-12)


@pytest.mark.parametrize("field,value", [
    ("r", 0.0), ("l", -1.0), ("i_max", 0.0), ("omega_base", -1.0)])
def test_plant_params_validation(field, value):
    with pytest.raises(ValueError):
        PlantParams(**{field: value})


def test_cost_params_validation():
    with pytest.raises(ValueError):
        CostParams(m_p=0.0)
    with pytest.raises(ValueError):
        CostParams(tau_v=-0.1)
    with pytest.raises(ValueError):
        CostParams(omega_scale=0.0)


def test_grid_signals_validation():
    with pytest.raises(ValueError):
        GridSignals(e_mag=-0.1)
    with pytest.raises(ValueError):
        GridSignals(omega_e=0.0)


def test_with_references_preserves_other_fields():
    cost = CostParams(m_p=1.0, m_q=0.2, tau_v=0.3, v_nom=1.02)
    new = cost.with_references(1.5, -0.5)
    assert (new.p_ref, new.q_ref) == (1.5, -0.5)
    assert (new.m_p, new.m_q, new.tau_v, new.v_nom) == (1.0, 0.2, 0.3, 1.02)
    assert new.omega_scale == cost.omega_scale
