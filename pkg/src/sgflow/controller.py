"""Feedback controllers and the optimal-equilibrium solver.

StgfController runs the rolling-horizon safe-gradient-flow loop: re-anchor
the stacked trajectory problem at the measured state, take K flow updates,
apply the first input, shift the input trajectory.  DroopController is the
explicit P-f / Q-V baseline with a current limiter.  solve_equilibrium finds
a KKT point of the 5-dimensional steady-state problem (cost subject to the
current limit and zero state derivative).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import root

from . import model, trajopt
from .model import CostParams, GridSignals, Input, PlantParams, State
from .sgf import (ClassKappaSpec, FunctionalNlp, QpInfeasibleError, SgfEngine,
                  nlp_kkt_residual)
from .trajopt import HorizonSpec, TrajectoryDecision, TrajectoryNlp


@dataclass(frozen=True)
class StgfConfig:
    spec: HorizonSpec = HorizonSpec()
    k_updates: int = 2
    xi: float = 1e-3
    kappa: ClassKappaSpec = ClassKappaSpec()
    n_steps: int = 300

    def __post_init__(self):
        if self.k_updates < 0:
            raise ValueError("k_updates must be >= 0")
        if not self.xi > 0.0:
            raise ValueError("xi must be positive")


@dataclass
class StepDiagnostics:
    solve_time_us: float = 0.0
    qp_infeasible: bool = False
    limiter_active: bool = False
    direction_norm: float = 0.0
    min_g: float = 0.0


class StgfController:
    """Safe trajectory gradient flow as a stateful feedback law."""

    def __init__(self, cfg: StgfConfig, plant: PlantParams, grid: GridSignals,
                 cost: CostParams, x0: State, u_init: Input):
        self.cfg = cfg
        self.plant = plant
        self.nlp = TrajectoryNlp(x0, grid, cost, plant, cfg.spec)
        self.engine = SgfEngine(cfg.kappa)
        self.inputs = [u_init] * cfg.spec.horizon_t
        self._last_direction = np.zeros(cfg.spec.dim)
        self.last_flow = StepDiagnostics()

    def step(self, x_meas: State, grid: GridSignals, cost: CostParams):
        """One control cycle; returns (applied input, diagnostics)."""
        cfg = self.cfg
        spec = cfg.spec
        self.nlp.x0 = x_meas
        self.nlp.grid = grid
        self.nlp.cost = cost

        t0 = time.perf_counter()
        states = trajopt.rollout(x_meas, self.inputs, grid, self.plant, spec)
        w = TrajectoryDecision(x_meas, states, self.inputs).flatten(spec)
        infeasible = False
        dir_norm = 0.0
        for _ in range(cfg.k_updates):
            try:
                flow = self.engine.direction(self.nlp, w)
                self._last_direction = flow.direction
                dir_norm = float(np.linalg.norm(flow.direction))
            except QpInfeasibleError:
                # Fall back to the previous direction, halved; never stop.
                infeasible = True
                self._last_direction = 0.5 * self._last_direction
                dir_norm = float(np.linalg.norm(self._last_direction))
            w = w + cfg.xi * self._last_direction
        solve_time_us = (time.perf_counter() - t0) * 1e6

        decision = TrajectoryDecision.unflatten(w, x_meas, spec)
        applied = decision.inputs[0]
        _, _, g_vals, _, _, _ = self.nlp.eval(w)
        self.inputs = decision.inputs[1:] + [decision.inputs[-1]]
        self.last_flow = StepDiagnostics(solve_time_us, infeasible, False,
                                         dir_norm,
                                         float(g_vals.min()) if g_vals.size else 0.0)
        return applied, self.last_flow


def stgf_init(x0: State, u_init: Input, cfg: StgfConfig, plant: PlantParams,
              grid: GridSignals, cost: CostParams) -> StgfController:
    return StgfController(cfg, plant, grid, cost, x0, u_init)


# ---------------------------------------------------------------------------
# Droop baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DroopConfig:
    """Gains sized against the RL branch's closed-loop sensitivities.

    With the fast per-unit branch (time constant l/(r*omega_base), about
    7.5 ms at the default parameters) the reactive-power response to the
    voltage command is roughly 870 pu/pu, so k_q must stay near 1e-3 for the
    Q-V loop to be stable at a 1 ms control period.  The limiter engages
    well below the current limit so the synchronizing term stays active and
    the saturated loop has a genuine equilibrium instead of a pole-slip
    cycle.
    """

    k_p: float = 0.002 * model.TWO_PI * 60.0   # rad/s per pu power error
    k_q: float = 0.002                         # pu volt per pu var error
    tau_f: float = 0.02                        # measurement filter, s
    i_thresh: float = 0.4                      # limiter activation, pu
    k_vi: float = 0.005                        # voltage reduction per pu excess
    k_sync: float = 0.01 * model.TWO_PI * 60.0  # rad/s per pu excess

    def __post_init__(self):
        if min(self.k_p, self.k_q, self.k_vi, self.k_sync) < 0:
            raise ValueError("droop gains must be >= 0")
        if not (self.tau_f > 0 and self.i_thresh > 0):
            raise ValueError("tau_f and i_thresh must be positive")


@dataclass
class DroopState:
    p_f: float = 0.0
    q_f: float = 0.0


def droop_step(d: DroopState, x_meas: State, p_meas: float, q_meas: float,
               cfg: DroopConfig, cost: CostParams, dt: float):
    """Explicit droop law with first-order measurement filters and a
    magnitude-based limiter; returns (Input, new DroopState, limiter flag)."""
    a = dt / cfg.tau_f
    p_f = d.p_f + a * (p_meas - d.p_f)
    q_f = d.q_f + a * (q_meas - d.q_f)
    omega = cost.omega_nom + cfg.k_p * (cost.p_ref - p_f)
    v = cost.v_nom + cfg.k_q * (cost.q_ref - q_f)
    i_mag = math.hypot(x_meas.i_d, x_meas.i_q)
    limiter = i_mag > cfg.i_thresh
    if limiter:
        excess = i_mag - cfg.i_thresh
        v -= cfg.k_vi * excess
        # Exporting power puts delta below zero, where current growth calls
        # for omega to back off toward the grid frequency; the sign(delta)
        # weighting makes the same correction work for the importing case.
        omega += cfg.k_sync * excess * _sync_sign(x_meas.delta)
    return Input(v, omega), DroopState(p_f, q_f), limiter


def _sync_sign(delta: float) -> float:
    wrapped = model.wrap_angle(delta)
    return 0.0 if wrapped == 0.0 else math.copysign(1.0, wrapped)


class DroopController:
    def __init__(self, cfg: DroopConfig, dt: float):
        self.cfg = cfg
        self.dt = dt
        self.state = DroopState()

    def step(self, x_meas: State, grid: GridSignals, cost: CostParams):
        t0 = time.perf_counter()
        p_meas, q_meas = model.power_output(x_meas, grid)
        u, self.state, limiter = droop_step(self.state, x_meas, p_meas, q_meas,
                                            self.cfg, cost, self.dt)
        solve_time_us = (time.perf_counter() - t0) * 1e6
        return u, StepDiagnostics(solve_time_us, False, limiter)


# ---------------------------------------------------------------------------
# Optimal equilibrium
# ---------------------------------------------------------------------------

@dataclass
class EquilibriumResult:
    x: State
    u: Input
    kkt_residual: float
    cost: float
    mu: float                  # current-limit multiplier
    nu: np.ndarray
    constraint_active: bool
    converged: bool
    iterations: int


def make_equilibrium_nlp(c: CostParams, p: PlantParams,
                         g: GridSignals) -> FunctionalNlp:
    """Steady-state NLP over w = (i_d, i_q, delta, v, omega).

    The two current-derivative equalities are row-scaled by l/omega_base so
    all constraint entries are O(1); scaling rows does not move the feasible
    set or the KKT points.
    """
    scale = np.array([p.l / p.omega_base, p.l / p.omega_base, 1.0])

    def split(w):
        return State(w[0], w[1], w[2]), Input(w[3], w[4])

    def cost_fn(w):
        x, u = split(w)
        gx, gu = model.stage_cost_grad(x, u, g, c)
        return model.stage_cost(x, u, g, c), np.concatenate([gx, gu])

    def ineq_fn(w):
        x, _ = split(w)
        jac = np.zeros((1, 5))
        jac[0, :3] = model.current_limit_grad(x, p)
        return np.array([model.current_limit(x, p)]), jac

    def eq_fn(w):
        x, u = split(w)
        f = model.continuous_dynamics(x, u, g, p)
        a_mat, b_mat = model.dynamics_jacobians(x, u, g, p)
        jac = np.hstack([a_mat, b_mat]) * scale[:, None]
        return f * scale, jac

    return FunctionalNlp(5, cost_fn, ineq_fn, eq_fn)


def _equilibrium_kappa() -> ClassKappaSpec:
    # alpha(0) = 0 variant so flow equilibria coincide with KKT points.
    return ClassKappaSpec(ineq_kind="shifted_exponential", eq_kind="linear")


def solve_equilibrium(c: CostParams, p: PlantParams, g: GridSignals,
                      tol: float = 1e-8, w0: Optional[np.ndarray] = None,
                      xi: float = 2e-3, flow_tol: float = 1e-4,
                      max_iters: int = 50_000) -> EquilibriumResult:
    """Flow to a stationary point of the steady-state NLP, then polish the
    identified KKT system with a root solve so the residual reaches tol."""
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    nlp = make_equilibrium_nlp(c, p, g)
    if w0 is None:
        w0 = np.array([0.0, 0.0, 0.0, g.e_mag, g.omega_e])
    engine = SgfEngine(_equilibrium_kappa())
    flow = engine.flow_to_convergence(nlp, np.asarray(w0, dtype=float),
                                      xi, flow_tol, max_iters)

    w, mu, nu = flow.w, flow.mu, flow.nu
    kkt = flow.kkt_residual
    converged = flow.converged
    # Polish: Newton on the first-order system with the active set frozen.
    for active in _candidate_active_sets(nlp, w, mu):
        sol = _polish(nlp, w, nu, mu, active)
        if sol is None:
            continue
        w_p, mu_p, nu_p = sol
        kkt_p = nlp_kkt_residual(nlp, w_p, [mu_p], nu_p)
        if kkt_p < kkt:
            w, mu, nu, kkt = w_p, np.array([mu_p]), nu_p, kkt_p
        if kkt <= tol:
            converged = True
            break

    x = State(w[0], w[1], w[2])
    u = Input(w[3], w[4])
    g_val = model.current_limit(x, p)
    return EquilibriumResult(x, u, kkt, model.stage_cost(x, u, g, c),
                             float(mu[0]), nu, bool(mu[0] > 1e-8 and g_val > -1e-4),
                             converged and kkt <= tol, flow.iterations)


def _candidate_active_sets(nlp, w, mu):
    _, _, g_vals, _, _, _ = nlp.eval(w)
    near_boundary = g_vals[0] > -1e-3 or mu[0] > 1e-6
    return ([True, False] if near_boundary else [False, True])


def _polish(nlp, w, nu, mu, active: bool):
    """Solve the stationarity + equality (+ active inequality) system."""
    n = nlp.dim
    n_eq = nu.size

    def resid(z):
        wz = z[:n]
        nuz = z[n:n + n_eq]
        muz = z[n + n_eq] if active else 0.0
        _, grad, g_vals, g_jac, h_vals, h_jac = nlp.eval(wz)
        stat = grad + h_jac.T @ nuz + muz * g_jac[0]
        parts = [stat, h_vals]
        if active:
            parts.append(np.array([g_vals[0]]))
        return np.concatenate(parts)

    z0 = np.concatenate([w, nu, [max(float(mu[0]), 0.0)]] if active
                        else [w, nu])
    sol = root(resid, z0, method="hybr", tol=1e-12)
    if not sol.success:
        return None
    z = sol.x
    wz = z[:n]
    nuz = z[n:n + n_eq]
    muz = float(z[n + n_eq]) if active else 0.0
    if muz < -1e-10:
        return None
    muz = max(muz, 0.0)
    # Keep the point on the feasible side of the current disc.
    _, _, g_vals, _, _, _ = nlp.eval(wz)
    if g_vals[0] > 0.0:
        i_mag = math.hypot(wz[0], wz[1])
        if i_mag > 0.0:
            shrink = math.sqrt(i_mag ** 2 - g_vals[0]) / i_mag * (1.0 - 1e-12)
            wz = wz.copy()
            wz[0] *= shrink
            wz[1] *= shrink
    return wz, muz, nuz
