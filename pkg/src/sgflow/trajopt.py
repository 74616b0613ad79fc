"""Finite-horizon trajectory NLP built by stacking the per-step model.

Decision vector layout (the measured initial state x0 is a constant, not a
decision variable):

    w = [x_1 ... x_T | u_0 ... u_{T-1}]          dim = 3T + 2T

Constraint stacks:
    G row tau (tau = 1..T):      current limit at x_tau
    H block tau (tau = 0..T-1):  x_{tau+1} - euler_step(x_tau, u_tau)

In the flat vector the frequency input is stored per-unit (omega divided by
HorizonSpec.omega_scale) so the gradient flow sees every coordinate on a
comparable scale; Input objects always carry rad/s.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import model
from .model import CostParams, GridSignals, Input, PlantParams, State

NX = 3
NU = 2


class DimensionError(ValueError):
    """Raised when a trajectory or stacked quantity has inconsistent shape."""


@dataclass(frozen=True)
class HorizonSpec:
    horizon_t: int = 10
    dt: float = 1e-3
    # rad/s of omega per unit of the flat-vector frequency coordinate.  This
    # conditions the gradient flow: at the base frequency itself the flow
    # under-damps the angle/frequency swing mode of the closed loop, while
    # leaving omega in rad/s makes the channel so stiff the loop settles an
    # order of magnitude too slowly.  A tenth of the base frequency damps the
    # swing mode and keeps the reported settling speed.
    omega_scale: float = 2.0 * np.pi * 6.0

    def __post_init__(self):
        if self.horizon_t < 2:
            raise ValueError("horizon_t must be >= 2 (it must exceed the "
                             "relative degree of the output dynamics)")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if not self.omega_scale > 0.0:
            raise ValueError("omega_scale must be positive")

    @property
    def dim(self) -> int:
        return (NX + NU) * self.horizon_t


@dataclass
class TrajectoryDecision:
    x0: State
    states: list          # x_1 .. x_T
    inputs: list          # u_0 .. u_{T-1}

    def check(self, spec: HorizonSpec):
        if len(self.states) != spec.horizon_t or len(self.inputs) != spec.horizon_t:
            raise DimensionError(
                f"expected {spec.horizon_t} states and inputs, got "
                f"{len(self.states)} / {len(self.inputs)}")

    def flatten(self, spec: HorizonSpec) -> np.ndarray:
        parts = [s.as_array() for s in self.states]
        parts += [np.array([u.v, u.omega / spec.omega_scale]) for u in self.inputs]
        return np.concatenate(parts)

    @staticmethod
    def unflatten(w: np.ndarray, x0: State, spec: HorizonSpec) -> "TrajectoryDecision":
        t = spec.horizon_t
        if w.shape != (spec.dim,):
            raise DimensionError(f"expected flat vector of dim {spec.dim}, got {w.shape}")
        states = [State.from_array(w[NX * i:NX * (i + 1)]) for i in range(t)]
        off = NX * t
        inputs = [Input(float(w[off + NU * i]),
                        float(w[off + NU * i + 1]) * spec.omega_scale)
                  for i in range(t)]
        return TrajectoryDecision(x0, states, inputs)


@dataclass
class StackedEval:
    c_val: float
    c_grad: np.ndarray
    g_vals: np.ndarray
    g_jac: np.ndarray
    h_vals: np.ndarray
    h_jac: np.ndarray


def x_cols(tau: int) -> slice:
    """Columns of x_tau (tau = 1..T) in the flat vector."""
    return slice(NX * (tau - 1), NX * tau)


def u_cols(tau: int, spec: HorizonSpec) -> slice:
    """Columns of u_tau (tau = 0..T-1) in the flat vector."""
    off = NX * spec.horizon_t
    return slice(off + NU * tau, off + NU * (tau + 1))


def rollout(x0: State, inputs: Sequence[Input], g: GridSignals, p: PlantParams,
            spec: HorizonSpec) -> list:
    """Propagate x_1..x_T with the Euler-discretized dynamics."""
    if len(inputs) != spec.horizon_t:
        raise DimensionError(f"expected {spec.horizon_t} inputs, got {len(inputs)}")
    states = []
    x = x0
    for u in inputs:
        x = model.discrete_dynamics(x, u, g, p, spec.dt)
        states.append(x)
    return states


def eval_stacked(w: TrajectoryDecision, g: GridSignals, c: CostParams,
                 p: PlantParams, spec: HorizonSpec,
                 extra_eq: Optional[Callable] = None) -> StackedEval:
    """Evaluate cost, constraint stacks, and their analytic Jacobians.

    extra_eq, when given, maps a State to (values, jacobian_wrt_state) and is
    stacked as additional per-step equality rows ahead of the dynamics
    defects, for problems with algebraic state equations.
    """
    w.check(spec)
    t = spec.horizon_t
    dim = spec.dim
    dt = spec.dt

    c_val = 0.0
    c_grad = np.zeros(dim)
    # Chain factor from the per-unit omega coordinate: d/d(omega_pu) =
    # omega_scale * d/d(omega).
    u_scale = np.array([1.0, spec.omega_scale])

    # Stage tau = 0 uses the fixed x0; only u_0 receives gradient.
    c_val += model.stage_cost(w.x0, w.inputs[0], g, c)
    _, gu = model.stage_cost_grad(w.x0, w.inputs[0], g, c)
    c_grad[u_cols(0, spec)] += gu * u_scale
    for tau in range(1, t):
        x_tau = w.states[tau - 1]
        u_tau = w.inputs[tau]
        c_val += model.stage_cost(x_tau, u_tau, g, c)
        gx, gu = model.stage_cost_grad(x_tau, u_tau, g, c)
        c_grad[x_cols(tau)] += gx
        c_grad[u_cols(tau, spec)] += gu * u_scale
    c_val += model.terminal_cost(w.states[-1], g, c)
    c_grad[x_cols(t)] += model.terminal_cost_grad(w.states[-1], g, c)

    g_vals = np.zeros(t)
    g_jac = np.zeros((t, dim))
    for tau in range(1, t + 1):
        x_tau = w.states[tau - 1]
        g_vals[tau - 1] = model.current_limit(x_tau, p)
        g_jac[tau - 1, x_cols(tau)] = model.current_limit_grad(x_tau, p)

    n_extra = 0
    extra_vals, extra_jacs = [], []
    if extra_eq is not None:
        for tau in range(1, t + 1):
            vals, jac = extra_eq(w.states[tau - 1])
            vals = np.atleast_1d(np.asarray(vals, dtype=float))
            jac = np.atleast_2d(np.asarray(jac, dtype=float))
            if jac.shape != (vals.size, NX):
                raise DimensionError("extra_eq jacobian shape mismatch")
            extra_vals.append(vals)
            extra_jacs.append(jac)
        n_extra = sum(v.size for v in extra_vals)

    h_vals = np.zeros(n_extra + NX * t)
    h_jac = np.zeros((n_extra + NX * t, dim))
    row = 0
    for tau in range(len(extra_vals)):
        vals = extra_vals[tau]
        h_vals[row:row + vals.size] = vals
        h_jac[row:row + vals.size, x_cols(tau + 1)] = extra_jacs[tau]
        row += vals.size

    for tau in range(t):
        x_tau = w.x0 if tau == 0 else w.states[tau - 1]
        u_tau = w.inputs[tau]
        x_next = w.states[tau]
        pred = model.discrete_dynamics(x_tau, u_tau, g, p, dt)
        a_mat, b_mat = model.dynamics_jacobians(x_tau, u_tau, g, p)
        rows = slice(row, row + NX)
        h_vals[rows] = x_next.as_array() - pred.as_array()
        h_jac[rows, x_cols(tau + 1)] = np.eye(NX)
        if tau > 0:
            h_jac[rows, x_cols(tau)] = -(np.eye(NX) + dt * a_mat)
        h_jac[rows, u_cols(tau, spec)] = -dt * b_mat * u_scale
        row += NX

    return StackedEval(c_val, c_grad, g_vals, g_jac, h_vals, h_jac)


@dataclass
class TrajectoryNlp:
    """Adapter presenting the stacked trajectory problem as a generic NLP.

    The measured initial state is mutable so a rolling-horizon controller can
    re-anchor the same problem object each cycle.
    """

    x0: State
    grid: GridSignals
    cost: CostParams
    plant: PlantParams
    spec: HorizonSpec
    extra_eq: Optional[Callable] = None

    @property
    def dim(self) -> int:
        return self.spec.dim

    def eval(self, w_flat: np.ndarray):
        w = TrajectoryDecision.unflatten(np.asarray(w_flat, dtype=float),
                                         self.x0, self.spec)
        ev = eval_stacked(w, self.grid, self.cost, self.plant, self.spec,
                          self.extra_eq)
        return ev.c_val, ev.c_grad, ev.g_vals, ev.g_jac, ev.h_vals, ev.h_jac
