"""Inverter-to-infinite-bus model in the dq frame.

All electrical quantities are per-unit; angular frequencies are rad/s and
time is in seconds.  The RL-branch dynamics are evaluated per-unit with the
inductance converted through the base frequency, which is equivalent to
evaluating the SI equations with R = r*z_base, L = l*z_base/omega_base and
converting back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PlantParams:
    """Physical parameters of the inverter RL branch and the base quantities."""

    r: float = 0.0069          # series resistance, pu
    l: float = 0.0196          # series inductance, pu
    i_max: float = 1.0         # current magnitude limit, pu
    omega_base: float = TWO_PI * 60.0   # rad/s
    v_base: float = 120.0      # V, RMS phase
    s_base: float = 1500.0     # VA
    i_base: float = 4.167      # A, RMS
    # The q-axis coupling term is -omega*i_d in the standard dq derivation.
    # Setting q_self_coupling=True uses -omega*i_q instead, which decouples
    # the axes; kept selectable for side-by-side comparison runs.
    q_self_coupling: bool = False

    def __post_init__(self):
        for name in ("r", "l", "i_max", "omega_base", "v_base", "s_base", "i_base"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"PlantParams.{name} must be positive")

    @property
    def decay_rate(self) -> float:
        """R/L in 1/s, after per-unit conversion."""
        return self.r * self.omega_base / self.l

    @property
    def drive_gain(self) -> float:
        """sqrt(2)/L voltage gain in (pu A/s) per pu V."""
        return math.sqrt(2.0) * self.omega_base / self.l


@dataclass(frozen=True)
class GridSignals:
    """Exogenous infinite-bus voltage magnitude and frequency.

    k_pq is the power-convention constant of the dq power formulas (3/2 for
    peak-referred quantities); constraint, cost and reporting all share it.
    """

    e_mag: float = 1.0
    omega_e: float = TWO_PI * 60.0
    k_pq: float = 1.5

    def __post_init__(self):
        if self.e_mag < 0.0:
            raise ValueError("GridSignals.e_mag must be >= 0")
        if not self.omega_e > 0.0:
            raise ValueError("GridSignals.omega_e must be positive")


@dataclass(frozen=True)
class State:
    i_d: float
    i_q: float
    delta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.i_d, self.i_q, self.delta])

    @staticmethod
    def from_array(a) -> "State":
        return State(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class Input:
    v: float
    omega: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.omega])

    @staticmethod
    def from_array(a) -> "Input":
        return Input(float(a[0]), float(a[1]))


@dataclass(frozen=True)
class CostParams:
    """Operating-cost weights and references.

    The frequency deviation is penalized per-unit, (omega - omega_nom) /
    omega_scale, keeping all four quadratic terms on the per-unit scale of
    the other quantities; omega itself stays in rad/s at every interface.
    """

    m_p: float = TWO_PI      # active-power droop weight
    m_q: float = 0.05        # reactive-power droop weight
    tau_v: float = 0.1       # voltage control speed term
    p_ref: float = 0.0       # pu
    q_ref: float = 0.0       # pu
    v_nom: float = 1.0       # pu
    omega_nom: float = TWO_PI * 60.0   # rad/s
    omega_scale: float = TWO_PI * 60.0  # rad/s per pu frequency

    def __post_init__(self):
        if not (self.m_p > 0.0 and self.m_q > 0.0 and self.tau_v > 0.0):
            raise ValueError("CostParams weights m_p, m_q, tau_v must be positive")
        if not self.omega_scale > 0.0:
            raise ValueError("CostParams.omega_scale must be positive")

    def with_references(self, p_ref, q_ref) -> "CostParams":
        return CostParams(self.m_p, self.m_q, self.tau_v, p_ref, q_ref,
                          self.v_nom, self.omega_nom, self.omega_scale)


def wrap_angle(delta: float) -> float:
    """Wrap an angle to (-pi, pi].  Logging only; never used inside
    derivatives or optimization."""
    wrapped = (delta + math.pi) % (2.0 * math.pi) - math.pi
    if wrapped == -math.pi:
        wrapped = math.pi
    return wrapped


def continuous_dynamics(x: State, u: Input, g: GridSignals, p: PlantParams) -> np.ndarray:
    """Time derivative (di_d, di_q, ddelta) of the RL-branch state."""
    a = p.decay_rate
    b = p.drive_gain
    cd = math.cos(x.delta)
    sd = math.sin(x.delta)
    di_d = -a * x.i_d + u.omega * x.i_q + b * (u.v - g.e_mag * cd)
    if p.q_self_coupling:
        di_q = -a * x.i_q - u.omega * x.i_q - b * g.e_mag * sd
    else:
        di_q = -a * x.i_q - u.omega * x.i_d - b * g.e_mag * sd
    ddelta = g.omega_e - u.omega
    return np.array([di_d, di_q, ddelta])


def discrete_dynamics(x: State, u: Input, g: GridSignals, p: PlantParams,
                      dt: float) -> State:
    """One forward-Euler step of length dt."""
    xn = x.as_array() + dt * continuous_dynamics(x, u, g, p)
    return State.from_array(xn)


def dynamics_jacobians(x: State, u: Input, g: GridSignals, p: PlantParams):
    """Analytic Jacobians (A = df/dx 3x3, B = df/du 3x2)."""
    a = p.decay_rate
    b = p.drive_gain
    cd = math.cos(x.delta)
    sd = math.sin(x.delta)
    A = np.zeros((3, 3))
    B = np.zeros((3, 2))
    A[0, 0] = -a
    A[0, 1] = u.omega
    A[0, 2] = b * g.e_mag * sd
    if p.q_self_coupling:
        A[1, 1] = -a - u.omega
    else:
        A[1, 0] = -u.omega
        A[1, 1] = -a
    A[1, 2] = -b * g.e_mag * cd
    B[0, 0] = b
    B[0, 1] = x.i_q
    B[1, 1] = -x.i_q if p.q_self_coupling else -x.i_d
    B[2, 1] = -1.0
    return A, B


def power_output(x: State, g: GridSignals):
    """Active and reactive power injected into the grid (pu)."""
    cd = math.cos(x.delta)
    sd = math.sin(x.delta)
    p_out = g.k_pq * g.e_mag * (cd * x.i_d + sd * x.i_q)
    q_out = g.k_pq * g.e_mag * (sd * x.i_d - cd * x.i_q)
    return p_out, q_out


def power_gradients(x: State, g: GridSignals):
    """Gradients of (P, Q) with respect to (i_d, i_q, delta)."""
    cd = math.cos(x.delta)
    sd = math.sin(x.delta)
    ke = g.k_pq * g.e_mag
    p_out = ke * (cd * x.i_d + sd * x.i_q)
    q_out = ke * (sd * x.i_d - cd * x.i_q)
    # dP/ddelta = -Q and dQ/ddelta = P (rotation structure).
    grad_p = np.array([ke * cd, ke * sd, -q_out])
    grad_q = np.array([ke * sd, -ke * cd, p_out])
    return grad_p, grad_q


def current_limit(x: State, p: PlantParams) -> float:
    """Constraint value i_d^2 + i_q^2 - i_max^2 (feasible when <= 0)."""
    return x.i_d ** 2 + x.i_q ** 2 - p.i_max ** 2


def current_limit_grad(x: State, p: PlantParams) -> np.ndarray:
    return np.array([2.0 * x.i_d, 2.0 * x.i_q, 0.0])


def stage_cost(x: State, u: Input, g: GridSignals, c: CostParams) -> float:
    p_out, q_out = power_output(x, g)
    omega_dev = (u.omega - c.omega_nom) / c.omega_scale
    return (0.5 * c.m_p * (p_out - c.p_ref) ** 2
            + 0.5 * c.m_q / c.tau_v * (q_out - c.q_ref) ** 2
            + 0.5 / c.tau_v * (u.v - c.v_nom) ** 2
            + 0.5 * omega_dev ** 2)


def stage_cost_grad(x: State, u: Input, g: GridSignals, c: CostParams):
    """Gradient of stage_cost with respect to (x, u): 3-vector and 2-vector."""
    p_out, q_out = power_output(x, g)
    grad_p, grad_q = power_gradients(x, g)
    gx = c.m_p * (p_out - c.p_ref) * grad_p \
        + c.m_q / c.tau_v * (q_out - c.q_ref) * grad_q
    gu = np.array([(u.v - c.v_nom) / c.tau_v,
                   (u.omega - c.omega_nom) / c.omega_scale ** 2])
    return gx, gu


def terminal_cost(x: State, g: GridSignals, c: CostParams) -> float:
    """Stage cost with the input terms removed; horizon-end penalty."""
    p_out, q_out = power_output(x, g)
    return (0.5 * c.m_p * (p_out - c.p_ref) ** 2
            + 0.5 * c.m_q / c.tau_v * (q_out - c.q_ref) ** 2)


def terminal_cost_grad(x: State, g: GridSignals, c: CostParams) -> np.ndarray:
    p_out, q_out = power_output(x, g)
    grad_p, grad_q = power_gradients(x, g)
    return c.m_p * (p_out - c.p_ref) * grad_p \
        + c.m_q / c.tau_v * (q_out - c.q_ref) * grad_q
