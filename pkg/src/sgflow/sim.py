"""Closed-loop simulation: zero-order-hold inputs, RK4 plant, recording.

Each cycle: apply any scheduled reference change, measure the plant state,
run the controller (its optimization time is taken from the controller's own
diagnostics), hold the input and integrate the plant one controller period,
record one row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import model
from .model import CostParams, GridSignals, Input, PlantParams, State


class SimulationError(RuntimeError):
    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


@dataclass
class Scenario:
    n_steps: int = 300
    dt: float = 1e-3
    x0: State = State(0.0, 0.0, 0.0)
    u_init: Optional[Input] = None     # None: synchronous idle (e_mag, omega_e)
    ref_schedule: List[Tuple[int, float, float]] = field(default_factory=list)
    grid_schedule: List[Tuple[int, GridSignals]] = field(default_factory=list)
    substeps: int = 10
    euler_plant: bool = False          # test mode: plant == controller model

    def __post_init__(self):
        if self.n_steps < 0 or not self.dt > 0 or self.substeps < 1:
            raise ValueError("invalid scenario dimensions")
        for sched in (self.ref_schedule, self.grid_schedule):
            idx = [s[0] for s in sched]
            if any(b <= a for a, b in zip(idx, idx[1:])):
                raise ValueError("schedule indices must be strictly increasing")
            if any(i < 0 or i > self.n_steps for i in idx):
                raise ValueError("schedule index outside [0, n_steps]")


@dataclass
class SimRecord:
    t: np.ndarray
    i_d: np.ndarray
    i_q: np.ndarray
    delta: np.ndarray          # wrapped to (-pi, pi] at this logging boundary
    v: np.ndarray
    omega: np.ndarray
    p: np.ndarray
    q: np.ndarray
    i_mag: np.ndarray
    g_val: np.ndarray
    stage_cost: np.ndarray
    solve_time_us: np.ndarray
    qp_infeasible: np.ndarray
    limiter_active: np.ndarray

    COLUMNS = ("t_s", "i_d_pu", "i_q_pu", "delta_rad", "v_pu", "omega_rad_s",
               "p_pu", "q_pu", "i_mag_pu", "g_val", "stage_cost",
               "solve_time_us", "qp_infeasible", "limiter_active")

    def __len__(self):
        return self.t.size

    def column(self, name: str) -> np.ndarray:
        mapping = dict(zip(self.COLUMNS, (self.t, self.i_d, self.i_q, self.delta,
                                          self.v, self.omega, self.p, self.q,
                                          self.i_mag, self.g_val, self.stage_cost,
                                          self.solve_time_us, self.qp_infeasible,
                                          self.limiter_active)))
        return mapping[name]


def integrate_plant(x: State, u: Input, g: GridSignals, p: PlantParams,
                    dt: float, substeps: int = 10) -> State:
    """Classical fixed-step RK4 with the input held constant."""
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    h = dt / substeps
    y = x.as_array()
    for _ in range(substeps):
        k1 = model.continuous_dynamics(State.from_array(y), u, g, p)
        k2 = model.continuous_dynamics(State.from_array(y + 0.5 * h * k1), u, g, p)
        k3 = model.continuous_dynamics(State.from_array(y + 0.5 * h * k2), u, g, p)
        k4 = model.continuous_dynamics(State.from_array(y + h * k3), u, g, p)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(y)):
        raise SimulationError("plant state became non-finite")
    return State.from_array(y)


def run_scenario(sc: Scenario, controller, p: PlantParams,
                 c: CostParams) -> SimRecord:
    """Run the closed loop and return the recorded time series.

    controller must expose step(x_meas, grid, cost) -> (Input, diagnostics)
    with diagnostics carrying solve_time_us / qp_infeasible / limiter_active.
    """
    n = sc.n_steps
    cols = {name: np.zeros(n) for name in SimRecord.COLUMNS}
    ref_sched = list(sc.ref_schedule)
    grid_sched = list(sc.grid_schedule)
    grid = GridSignals()
    cost = c
    x = sc.x0
    for k in range(n):
        while ref_sched and ref_sched[0][0] == k:
            _, p_ref, q_ref = ref_sched.pop(0)
            cost = cost.with_references(p_ref, q_ref)
        while grid_sched and grid_sched[0][0] == k:
            grid = grid_sched.pop(0)[1]
        try:
            u, diag = controller.step(x, grid, cost)
        except Exception as exc:
            raise SimulationError(f"controller failed at step {k}: {exc}",
                                  step_index=k) from exc
        p_out, q_out = model.power_output(x, grid)
        cols["t_s"][k] = k * sc.dt
        cols["i_d_pu"][k] = x.i_d
        cols["i_q_pu"][k] = x.i_q
        cols["delta_rad"][k] = model.wrap_angle(x.delta)
        cols["v_pu"][k] = u.v
        cols["omega_rad_s"][k] = u.omega
        cols["p_pu"][k] = p_out
        cols["q_pu"][k] = q_out
        cols["i_mag_pu"][k] = math.hypot(x.i_d, x.i_q)
        cols["g_val"][k] = model.current_limit(x, p)
        cols["stage_cost"][k] = model.stage_cost(x, u, grid, cost)
        cols["solve_time_us"][k] = diag.solve_time_us
        cols["qp_infeasible"][k] = float(diag.qp_infeasible)
        cols["limiter_active"][k] = float(diag.limiter_active)
        try:
            if sc.euler_plant:
                x = model.discrete_dynamics(x, u, grid, p, sc.dt)
            else:
                x = integrate_plant(x, u, grid, p, sc.dt, sc.substeps)
        except SimulationError as exc:
            raise SimulationError(str(exc), step_index=k) from exc
    return SimRecord(*(cols[name] for name in SimRecord.COLUMNS))
