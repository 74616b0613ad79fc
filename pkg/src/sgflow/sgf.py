"""Safe gradient flow over a generic NLP.

The flow direction is

    wdot = -grad_c(w) - Jg' mu - Jh' nu

with (mu, nu) chosen by a minimum-alteration QP over the admissible set that
keeps the feasible region invariant: the QP minimizes ||Jg' mu + Jh' nu||^2
subject to

    -Jg Jg' mu - Jg Jh' nu <= Jg grad_c - alpha(g)
    -Jh Jg' mu - Jh Jh' nu  = Jh grad_c - alpha_eq(h)

mu >= 0 is deliberately not imposed; the primal-form oracle in
sgflow.oracles bounds any divergence this could introduce.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

from .qp import INFEASIBLE, OPTIMAL, ActiveSetQp, QpProblem


class NlpFunctions(Protocol):
    """Callable facet of an NLP: dimension plus a single evaluation hook
    returning (cost, cost_grad, g_vals, g_jac, h_vals, h_jac)."""

    dim: int

    def eval(self, w: np.ndarray): ...


@dataclass
class FunctionalNlp:
    """NlpFunctions built from plain callables; handy for small problems."""

    dim: int
    cost: callable                       # w -> (value, gradient)
    ineq: Optional[callable] = None      # w -> (values, jacobian)
    eq: Optional[callable] = None

    def eval(self, w: np.ndarray):
        c_val, c_grad = self.cost(w)
        if self.ineq is not None:
            g_vals, g_jac = self.ineq(w)
            g_vals = np.atleast_1d(np.asarray(g_vals, dtype=float))
            g_jac = np.atleast_2d(np.asarray(g_jac, dtype=float))
        else:
            g_vals, g_jac = np.zeros(0), np.zeros((0, self.dim))
        if self.eq is not None:
            h_vals, h_jac = self.eq(w)
            h_vals = np.atleast_1d(np.asarray(h_vals, dtype=float))
            h_jac = np.atleast_2d(np.asarray(h_jac, dtype=float))
        else:
            h_vals, h_jac = np.zeros(0), np.zeros((0, self.dim))
        return float(c_val), np.asarray(c_grad, dtype=float), g_vals, g_jac, h_vals, h_jac


_KINDS = ("exponential", "shifted_exponential", "linear")


@dataclass(frozen=True)
class ClassKappaSpec:
    """Barrier-rate functions applied to constraint values.

    exponential:          z -> gain * exp(rate*z)   (positive at 0)
    shifted_exponential:  z -> gain * (exp(rate*z) - 1)
    linear:               z -> gain * z

    Outputs are clamped to [-max_value, max_value] so badly violated
    constraints cannot overflow the QP right-hand side.

    The default is the shifted exponential: the plain exponential is positive
    for every argument, which forces the flow inward even deep inside the
    feasible set and prevents convergence to boundary optima.  The plain
    exponential stays selectable for comparison runs.
    """

    ineq_kind: str = "shifted_exponential"
    ineq_gain: float = 20.0
    ineq_rate: float = 10.0
    eq_kind: str = "linear"
    eq_gain: float = 20.0
    eq_rate: float = 10.0
    max_value: float = 1e6

    def __post_init__(self):
        if self.ineq_kind not in _KINDS or self.eq_kind not in _KINDS:
            raise ValueError(f"kappa kind must be one of {_KINDS}")
        if not (self.ineq_gain > 0 and self.ineq_rate > 0
                and self.eq_gain > 0 and self.eq_rate > 0):
            raise ValueError("kappa gains and rates must be positive")

    def _apply(self, kind, gain, rate, z):
        z = np.asarray(z, dtype=float)
        if kind == "linear":
            out = gain * z
        else:
            ez = np.exp(np.minimum(rate * z, 50.0))
            out = gain * (ez - 1.0) if kind == "shifted_exponential" else gain * ez
        return np.clip(out, -self.max_value, self.max_value)

    def alpha_ineq(self, z):
        return self._apply(self.ineq_kind, self.ineq_gain, self.ineq_rate, z)

    def alpha_eq(self, z):
        return self._apply(self.eq_kind, self.eq_gain, self.eq_rate, z)


@dataclass
class FlowResult:
    direction: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    qp_status: str
    qp_iterations: int = 0
    dropped_rows: tuple = ()


@dataclass
class ConvergenceResult:
    w: np.ndarray
    kkt_residual: float
    iterations: int
    converged: bool
    direction_norm: float
    mu: np.ndarray
    nu: np.ndarray


class QpInfeasibleError(RuntimeError):
    """The admissible-set QP has no solution at the current point."""

    def __init__(self, message, g_vals=None, h_vals=None, dropped=()):
        super().__init__(message)
        self.g_vals = g_vals
        self.h_vals = h_vals
        self.dropped = dropped


class SgfEngine:
    """Flow-direction engine owning a warm-startable QP workspace.

    Inequality rows whose constraint gradient is numerically zero are handled
    specially: if the constraint is strictly satisfied the row is dropped
    (the constraint is locally uncontrollable and cannot be approached to
    first order), otherwise the problem is reported infeasible.
    """

    def __init__(self, kappa: ClassKappaSpec, qp_tol: float = 1e-9,
                 qp_max_iter: int = 500, zero_row_tol: float = 1e-8,
                 zero_row_margin: float = 1e-6):
        self.kappa = kappa
        self.qp_tol = qp_tol
        self.zero_row_tol = zero_row_tol
        self.zero_row_margin = zero_row_margin
        self._qp = ActiveSetQp(tol=qp_tol, max_iter=qp_max_iter)

    def reset_warm_start(self):
        self._qp.warm_active = None

    def direction(self, nlp: NlpFunctions, w: np.ndarray) -> FlowResult:
        w = np.asarray(w, dtype=float)
        _, grad, g_vals, g_jac, h_vals, h_jac = nlp.eval(w)
        n_g, n_h = g_vals.size, h_vals.size

        keep = np.ones(n_g, dtype=bool)
        if n_g:
            row_norms = np.abs(g_jac).max(axis=1) if g_jac.size else np.zeros(n_g)
            degenerate = row_norms <= self.zero_row_tol
            stuck = degenerate & (g_vals > -self.zero_row_margin)
            if stuck.any():
                raise QpInfeasibleError(
                    "zero constraint gradient at an active inequality",
                    g_vals=g_vals, h_vals=h_vals,
                    dropped=tuple(np.nonzero(degenerate)[0]))
            keep = ~degenerate
        jg = g_jac[keep] if n_g else g_jac
        gk = g_vals[keep] if n_g else g_vals
        dropped = tuple(np.nonzero(~keep)[0].tolist()) if n_g else ()

        n_gk = gk.size
        if n_gk == 0 and n_h == 0:
            return FlowResult(-grad, np.zeros(n_g), np.zeros(0), OPTIMAL,
                              0, dropped)

        m_mat = np.vstack([jg, h_jac])
        hess = m_mat @ m_mat.T
        lin = np.zeros(n_gk + n_h)
        ineq_mat = ineq_rhs = None
        if n_gk:
            ineq_mat = -jg @ m_mat.T
            ineq_rhs = jg @ grad - self.kappa.alpha_ineq(gk)
        eq_mat = eq_rhs = None
        if n_h:
            eq_mat = -h_jac @ m_mat.T
            eq_rhs = h_jac @ grad - self.kappa.alpha_eq(h_vals)

        problem = QpProblem(hess, lin, ineq_mat, ineq_rhs, eq_mat, eq_rhs)
        sol = self._qp.solve(problem)
        if sol.status == INFEASIBLE:
            raise QpInfeasibleError("admissible-set QP infeasible",
                                    g_vals=g_vals, h_vals=h_vals,
                                    dropped=dropped)

        mu = np.zeros(n_g)
        if n_gk:
            mu[keep] = sol.y[:n_gk]
        nu = sol.y[n_gk:]
        direction = -grad - m_mat.T @ sol.y
        return FlowResult(direction, mu, nu, sol.status, sol.iterations, dropped)

    def step(self, nlp: NlpFunctions, w: np.ndarray, xi: float) -> np.ndarray:
        if not xi > 0.0:
            raise ValueError("xi must be positive")
        return np.asarray(w, dtype=float) + xi * self.direction(nlp, w).direction

    def flow_to_convergence(self, nlp: NlpFunctions, w0: np.ndarray, xi: float,
                            tol: float, max_iters: int) -> ConvergenceResult:
        w = np.asarray(w0, dtype=float).copy()
        res = self.direction(nlp, w)
        it = 0
        dir_norm = float(np.linalg.norm(res.direction))
        while dir_norm > tol and it < max_iters:
            w = w + xi * res.direction
            res = self.direction(nlp, w)
            dir_norm = float(np.linalg.norm(res.direction))
            it += 1
        kkt = nlp_kkt_residual(nlp, w, res.mu, res.nu)
        return ConvergenceResult(w, kkt, it, dir_norm <= tol, dir_norm,
                                 res.mu, res.nu)


def nlp_kkt_residual(nlp: NlpFunctions, w: np.ndarray, mu, nu) -> float:
    """Max of stationarity, primal feasibility, dual feasibility and
    complementarity for the NLP at (w, mu, nu)."""
    w = np.asarray(w, dtype=float)
    mu = np.asarray(mu, dtype=float).ravel()
    nu = np.asarray(nu, dtype=float).ravel()
    _, grad, g_vals, g_jac, h_vals, h_jac = nlp.eval(w)
    if mu.size != g_vals.size or nu.size != h_vals.size:
        raise ValueError("multiplier dimensions do not match constraint counts")
    stat = grad.copy()
    if mu.size:
        stat += g_jac.T @ mu
    if nu.size:
        stat += h_jac.T @ nu
    res = float(np.abs(stat).max()) if stat.size else 0.0
    if g_vals.size:
        res = max(res, float(max(0.0, g_vals.max())))
        res = max(res, float(max(0.0, -mu.min())))
        res = max(res, float(np.abs(mu * g_vals).max()))
    if h_vals.size:
        res = max(res, float(np.abs(h_vals).max()))
    return res


def sgf_direction(nlp: NlpFunctions, w, kappa: ClassKappaSpec,
                  qp_tol: float = 1e-9) -> FlowResult:
    """Cold-start flow direction at w."""
    return SgfEngine(kappa, qp_tol=qp_tol).direction(nlp, w)


def sgf_step(nlp: NlpFunctions, w, kappa: ClassKappaSpec, xi: float,
             qp_tol: float = 1e-9) -> np.ndarray:
    return SgfEngine(kappa, qp_tol=qp_tol).step(nlp, w, xi)


def flow_to_convergence(nlp: NlpFunctions, w0, kappa: ClassKappaSpec,
                        xi: float, tol: float,
                        max_iters: int = 100_000) -> ConvergenceResult:
    return SgfEngine(kappa).flow_to_convergence(nlp, w0, xi, tol, max_iters)
