"""Self-check suites: derivative, QP-oracle, primal-form equivalence, and
anytime-feasibility verification.  Used by the command line front end and
reused by the test suite; all randomness is seeded."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model, oracles, qp as qpmod, trajopt
from .model import CostParams, GridSignals, Input, PlantParams, State
from .sgf import ClassKappaSpec, QpInfeasibleError, SgfEngine
from .trajopt import HorizonSpec, TrajectoryDecision, TrajectoryNlp


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _rel_err(analytic, reference):
    analytic = np.asarray(analytic, dtype=float)
    reference = np.asarray(reference, dtype=float)
    scale = max(1.0, float(np.abs(analytic).max()) if analytic.size else 1.0)
    return float(np.abs(analytic - reference).max()) / scale


def random_state(rng) -> State:
    return State(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                 rng.uniform(-0.5, 0.5))


def random_input(rng, omega_base) -> Input:
    return Input(rng.uniform(0.8, 1.2), omega_base + rng.uniform(-5.0, 5.0))


def equilibrium_input_for_current(i_d, i_q, g: GridSignals, p: PlantParams):
    """Input (v, omega) and angle delta that hold (i_d, i_q) as an exact
    equilibrium of the RL branch with omega = omega_e."""
    a = p.decay_rate
    b = p.drive_gain
    omega = g.omega_e
    s = -(a * i_q + omega * i_d) / (b * g.e_mag)
    if abs(s) > 1.0:
        raise ValueError("current not sustainable as an equilibrium")
    delta = math.asin(s)
    v = g.e_mag * math.cos(delta) + (a * i_d - omega * i_q) / b
    return Input(v, omega), delta


def sample_feasible_trajectory(rng, plant: PlantParams, grid: GridSignals,
                               spec: HorizonSpec, margin=1e-3,
                               input_jitter=(5e-5, 0.02)):
    """Defect-free trajectory (built by rollout) with every stacked
    current-limit value <= -margin, or None if the draw missed."""
    radius = math.sqrt(max(plant.i_max ** 2 - 10.0 * margin, 0.0))
    r = radius * math.sqrt(rng.uniform(0.0, 1.0))
    phi = rng.uniform(-math.pi, math.pi)
    i_d, i_q = r * math.cos(phi), r * math.sin(phi)
    try:
        u_eq, delta = equilibrium_input_for_current(i_d, i_q, grid, plant)
    except ValueError:
        return None
    x0 = State(i_d, i_q, delta)
    dv, domega = input_jitter
    inputs = [Input(u_eq.v + rng.uniform(-dv, dv),
                    u_eq.omega + rng.uniform(-domega, domega))
              for _ in range(spec.horizon_t)]
    states = trajopt.rollout(x0, inputs, grid, plant, spec)
    w = TrajectoryDecision(x0, states, inputs)
    g_vals = np.array([model.current_limit(s, plant) for s in states])
    if g_vals.max() > -margin:
        return None
    return w


def check_model_gradients(seed=0, n_points=100, tol=1e-6) -> CheckResult:
    rng = np.random.default_rng(seed)
    plant = PlantParams()
    grid = GridSignals()
    cost = CostParams(p_ref=0.4, q_ref=-0.1)
    worst = 0.0
    for _ in range(n_points):
        x = random_state(rng)
        u = random_input(rng, plant.omega_base)

        def f_of_x(z):
            return model.continuous_dynamics(State.from_array(z), u, grid, plant)

        def f_of_u(z):
            return model.continuous_dynamics(x, Input.from_array(z), grid, plant)

        a_mat, b_mat = model.dynamics_jacobians(x, u, grid, plant)
        worst = max(worst, _rel_err(a_mat, oracles.finite_difference_jacobian(f_of_x, x.as_array())))
        worst = max(worst, _rel_err(b_mat, oracles.finite_difference_jacobian(f_of_u, u.as_array())))

        worst = max(worst, _rel_err(
            model.current_limit_grad(x, plant),
            oracles.finite_difference_gradient(
                lambda z: model.current_limit(State.from_array(z), plant),
                x.as_array(), h=1e-5)))

        gx, gu = model.stage_cost_grad(x, u, grid, cost)
        worst = max(worst, _rel_err(gx, oracles.finite_difference_gradient(
            lambda z: model.stage_cost(State.from_array(z), u, grid, cost),
            x.as_array())))
        worst = max(worst, _rel_err(gu, oracles.finite_difference_gradient(
            lambda z: model.stage_cost(x, Input.from_array(z), grid, cost),
            u.as_array())))
        worst = max(worst, _rel_err(
            model.terminal_cost_grad(x, grid, cost),
            oracles.finite_difference_gradient(
                lambda z: model.terminal_cost(State.from_array(z), grid, cost),
                x.as_array())))
    return CheckResult("model-gradients", worst <= tol,
                       f"worst relative error {worst:.3e} over {n_points} points (tol {tol:g})")


def check_stacked_gradients(seed=1, n_points=100, tol=1e-6,
                            spec: HorizonSpec = HorizonSpec()) -> CheckResult:
    rng = np.random.default_rng(seed)
    plant = PlantParams()
    grid = GridSignals()
    cost = CostParams(p_ref=0.3, q_ref=0.1)
    worst = 0.0
    for _ in range(n_points):
        x0 = random_state(rng)
        nlp = TrajectoryNlp(x0, grid, cost, plant, spec)
        w = np.concatenate([
            np.concatenate([random_state(rng).as_array()
                            for _ in range(spec.horizon_t)]),
            np.concatenate([random_input(rng, plant.omega_base).as_array()
                            for _ in range(spec.horizon_t)])])
        _, c_grad, _, g_jac, _, h_jac = nlp.eval(w)
        worst = max(worst, _rel_err(c_grad, oracles.finite_difference_gradient(
            lambda z: nlp.eval(z)[0], w)))
        worst = max(worst, _rel_err(g_jac, oracles.finite_difference_jacobian(
            lambda z: nlp.eval(z)[2], w, h=1e-5)))
        worst = max(worst, _rel_err(h_jac, oracles.finite_difference_jacobian(
            lambda z: nlp.eval(z)[4], w)))
    return CheckResult("stacked-gradients", worst <= tol,
                       f"worst relative error {worst:.3e} over {n_points} points (tol {tol:g})")


def random_qp(rng, max_dim=6, max_ineq=4, max_eq=2,
              force_feasible=True) -> qpmod.QpProblem:
    n = int(rng.integers(1, max_dim + 1))
    m = int(rng.integers(0, max_ineq + 1))
    k = int(rng.integers(0, min(max_eq, n - 1) + 1)) if n > 1 else 0
    base = rng.standard_normal((n, n))
    hess = base @ base.T + 0.1 * np.eye(n)
    lin = rng.standard_normal(n)
    y0 = rng.standard_normal(n)
    ineq_mat = rng.standard_normal((m, n)) if m else None
    ineq_rhs = None
    if m:
        slack = rng.uniform(0.0, 1.0, m) if force_feasible else rng.uniform(-1.0, 1.0, m)
        ineq_rhs = ineq_mat @ y0 + slack
    eq_mat = rng.standard_normal((k, n)) if k else None
    eq_rhs = eq_mat @ y0 if k else None
    return qpmod.QpProblem(hess, lin, ineq_mat, ineq_rhs, eq_mat, eq_rhs)


def check_qp_oracle(seed=2, n_problems=500, primal_tol=1e-6, obj_tol=1e-8,
                    kkt_tol=1e-8) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_primal = worst_obj = worst_kkt = 0.0
    n_solved = 0
    for _ in range(n_problems):
        problem = random_qp(rng)
        sol = qpmod.solve(problem)
        ref = oracles.enumerate_qp(problem)
        if sol.status != qpmod.OPTIMAL or ref is None:
            return CheckResult(
                "qp-oracle", False,
                f"status mismatch: solver {sol.status}, oracle "
                f"{'feasible' if ref else 'infeasible'}")
        y_ref, _, _ = ref
        worst_primal = max(worst_primal, float(np.abs(sol.y - y_ref).max()))
        worst_obj = max(worst_obj,
                        abs(problem.objective(sol.y) - problem.objective(y_ref)))
        worst_kkt = max(worst_kkt, qpmod.kkt_residual(problem, sol))
        n_solved += 1
    ok = (worst_primal <= primal_tol and worst_obj <= obj_tol
          and worst_kkt <= kkt_tol)
    return CheckResult("qp-oracle", ok,
                       f"{n_solved} problems; primal {worst_primal:.3e} "
                       f"obj {worst_obj:.3e} kkt {worst_kkt:.3e}")


def check_primal_equivalence(seed=3, n_points=100, tol=1e-6,
                             kappa: ClassKappaSpec = ClassKappaSpec()) -> CheckResult:
    rng = np.random.default_rng(seed)
    plant = PlantParams()
    grid = GridSignals()
    spec = HorizonSpec()
    engine = SgfEngine(kappa)
    worst = 0.0
    done = 0
    while done < n_points:
        w = sample_feasible_trajectory(rng, plant, grid, spec)
        if w is None:
            continue
        cost = CostParams(p_ref=rng.uniform(-2.5, 2.5), q_ref=rng.uniform(-1.0, 1.0))
        nlp = TrajectoryNlp(w.x0, grid, cost, plant, spec)
        flat = w.flatten(spec)
        engine.reset_warm_start()
        flow = engine.direction(nlp, flat)
        _, grad, g_vals, g_jac, h_vals, h_jac = nlp.eval(flat)
        ref = oracles.primal_flow_direction(grad, g_vals, g_jac, h_vals,
                                            h_jac, kappa)
        scale = max(1.0, float(np.abs(flow.direction).max()))
        worst = max(worst, float(np.abs(flow.direction - ref).max()) / scale)
        done += 1
    return CheckResult("primal-equivalence", worst <= tol,
                       f"worst relative direction gap {worst:.3e} over "
                       f"{n_points} trajectory points (tol {tol:g})")


def check_anytime_feasibility(seed=4, n_traj=100, k_updates=2, xi=1e-3,
                              kappa: ClassKappaSpec = ClassKappaSpec()) -> CheckResult:
    """One controller cycle from a strictly feasible trajectory must keep
    every stacked current-limit component non-positive."""
    rng = np.random.default_rng(seed)
    plant = PlantParams()
    grid = GridSignals()
    spec = HorizonSpec()
    cost = CostParams(p_ref=2.5, q_ref=-0.5)
    worst_g = -np.inf
    done = 0
    while done < n_traj:
        w = sample_feasible_trajectory(rng, plant, grid, spec)
        if w is None:
            continue
        nlp = TrajectoryNlp(w.x0, grid, cost, plant, spec)
        flat = w.flatten(spec)
        engine = SgfEngine(kappa)
        ok = True
        for _ in range(k_updates):
            try:
                flat = engine.step(nlp, flat, xi)
            except QpInfeasibleError:
                ok = False
                break
            g_vals = nlp.eval(flat)[2]
            worst_g = max(worst_g, float(g_vals.max()))
        if not ok:
            return CheckResult("anytime-feasibility", False,
                               "admissible-set QP infeasible on a feasible trajectory")
        done += 1
    return CheckResult("anytime-feasibility", worst_g <= 0.0,
                       f"max constraint value after updates {worst_g:.3e} "
                       f"over {n_traj} trajectories")


def run_all(fast=False):
    n = 25 if fast else 100
    nq = 120 if fast else 500
    return [
        check_model_gradients(n_points=n),
        check_stacked_gradients(n_points=min(n, 30) if fast else 100),
        check_qp_oracle(n_problems=nq),
        check_primal_equivalence(n_points=min(n, 25) if fast else 100),
        check_anytime_feasibility(n_traj=n),
    ]
