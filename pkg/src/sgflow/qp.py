"""Dense convex QP solver for small minimum-alteration problems.

    minimize    0.5 y' P y + q' y
    subject to  A y <= b
                E y =  d

Primal active-set method with direct factorization of the equality-augmented
KKT system.  A Tikhonov term eps*I with eps = 1e-10*(1 + trace(P)/n) is
always added to P, so Gram-structured (possibly rank-deficient) Hessians
yield a unique minimizer.  Problems here are tens of variables at most.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"


@dataclass
class QpProblem:
    hess: np.ndarray
    lin: np.ndarray
    ineq_mat: Optional[np.ndarray] = None
    ineq_rhs: Optional[np.ndarray] = None
    eq_mat: Optional[np.ndarray] = None
    eq_rhs: Optional[np.ndarray] = None

    def __post_init__(self):
        self.hess = np.atleast_2d(np.asarray(self.hess, dtype=float))
        self.lin = np.asarray(self.lin, dtype=float).ravel()
        n = self.lin.size
        if self.hess.shape != (n, n):
            raise ValueError(f"hess must be {n}x{n}, got {self.hess.shape}")
        asym = np.abs(self.hess - self.hess.T).max() if n else 0.0
        if asym > 1e-12 * max(1.0, np.abs(self.hess).max()):
            raise ValueError("hess must be symmetric")
        if self.ineq_mat is None:
            self.ineq_mat = np.zeros((0, n))
            self.ineq_rhs = np.zeros(0)
        else:
            self.ineq_mat = np.atleast_2d(np.asarray(self.ineq_mat, dtype=float))
            self.ineq_rhs = np.asarray(self.ineq_rhs, dtype=float).ravel()
        if self.eq_mat is None:
            self.eq_mat = np.zeros((0, n))
            self.eq_rhs = np.zeros(0)
        else:
            self.eq_mat = np.atleast_2d(np.asarray(self.eq_mat, dtype=float))
            self.eq_rhs = np.asarray(self.eq_rhs, dtype=float).ravel()
        if self.ineq_mat.shape != (self.ineq_rhs.size, n):
            raise ValueError("inequality system dimensions inconsistent")
        if self.eq_mat.shape != (self.eq_rhs.size, n):
            raise ValueError("equality system dimensions inconsistent")

    @property
    def dim(self) -> int:
        return self.lin.size

    @property
    def n_ineq(self) -> int:
        return self.ineq_rhs.size

    @property
    def n_eq(self) -> int:
        return self.eq_rhs.size

    def objective(self, y: np.ndarray) -> float:
        return 0.5 * float(y @ self.hess @ y) + float(self.lin @ y)


@dataclass
class QpSolution:
    y: np.ndarray
    ineq_mult: np.ndarray
    eq_mult: np.ndarray
    status: str
    kkt_residual: float
    iterations: int = 0
    active_set: tuple = field(default_factory=tuple)


def kkt_residual(qp: QpProblem, sol: QpSolution) -> float:
    """Independent KKT residual: max of stationarity, primal violation,
    negative-multiplier magnitude, and complementarity."""
    y = np.asarray(sol.y, dtype=float)
    mu = np.asarray(sol.ineq_mult, dtype=float)
    nu = np.asarray(sol.eq_mult, dtype=float)
    stat = qp.hess @ y + qp.lin
    if qp.n_ineq:
        stat = stat + qp.ineq_mat.T @ mu
    if qp.n_eq:
        stat = stat + qp.eq_mat.T @ nu
    res = np.abs(stat).max() if stat.size else 0.0
    if qp.n_ineq:
        slack = qp.ineq_mat @ y - qp.ineq_rhs
        res = max(res, max(0.0, slack.max()))
        res = max(res, max(0.0, -(mu.min())) if mu.size else 0.0)
        res = max(res, np.abs(mu * slack).max())
    if qp.n_eq:
        res = max(res, np.abs(qp.eq_mat @ y - qp.eq_rhs).max())
    return float(res)


class ActiveSetQp:
    """Reusable solver holding tolerances and (optionally) a warm start.

    One instance per thread; instances carry no global state.
    """

    def __init__(self, tol: float = 1e-9, max_iter: int = 500,
                 feas_tol: float = 1e-8):
        self.tol = tol
        self.max_iter = max_iter
        self.feas_tol = feas_tol
        self.warm_active: Optional[tuple] = None

    def solve(self, qp: QpProblem,
              warm_active: Optional[tuple] = None) -> QpSolution:
        n = qp.dim
        eps = 1e-10 * (1.0 + (np.trace(qp.hess) / n if n else 0.0))
        hess = qp.hess + eps * np.eye(n)

        if warm_active is None:
            warm_active = self.warm_active

        if qp.n_ineq == 0:
            y, nu = self._solve_eqp(hess, qp.lin, qp.eq_mat, qp.eq_rhs)
            sol = QpSolution(y, np.zeros(0), nu, OPTIMAL, 0.0, 1, ())
            sol.kkt_residual = kkt_residual(qp, sol)
            polished = self._polish(qp, [], sol)
            if polished is not None:
                sol = polished
            self.warm_active = ()
            return sol

        start = self._starting_point(qp, hess, warm_active)
        if start is None:
            return QpSolution(np.zeros(n), np.zeros(qp.n_ineq),
                              np.zeros(qp.n_eq), INFEASIBLE, np.inf, 0, ())
        y, work = start

        a_mat, b_vec = qp.ineq_mat, qp.ineq_rhs
        mu_w = np.zeros(0)
        nu = np.zeros(qp.n_eq)
        it = 0
        while it < self.max_iter:
            it += 1
            rows = sorted(work)
            grad = hess @ y + qp.lin
            p, nu, mu_w = self._kkt_step(hess, grad, qp.eq_mat, a_mat[rows])
            if p.size == 0 or np.abs(p).max() <= self.tol * (1.0 + (np.abs(y).max() if y.size else 0.0)):
                if mu_w.size == 0 or mu_w.min() >= -self.tol:
                    mu = np.zeros(qp.n_ineq)
                    mu[rows] = np.maximum(mu_w, 0.0)
                    sol = QpSolution(y, mu, nu, OPTIMAL, 0.0, it, tuple(rows))
                    sol.kkt_residual = kkt_residual(qp, sol)
                    polished = self._polish(qp, rows, sol)
                    if polished is not None:
                        sol = polished
                    self.warm_active = tuple(rows)
                    return sol
                work.remove(rows[int(np.argmin(mu_w))])
                continue
            # Line step toward the EQP minimizer, blocked by inactive rows.
            alpha = 1.0
            blocking = -1
            for i in range(qp.n_ineq):
                if i in work:
                    continue
                ap = float(a_mat[i] @ p)
                if ap > 1e-14 * max(1.0, np.abs(a_mat[i]).max()):
                    ai = (b_vec[i] - float(a_mat[i] @ y)) / ap
                    if ai < alpha:
                        alpha = max(ai, 0.0)
                        blocking = i
            y = y + alpha * p
            if blocking >= 0:
                work.add(blocking)

        mu = np.zeros(qp.n_ineq)
        rows = sorted(work)
        if mu_w.size == len(rows):
            mu[rows] = mu_w
        sol = QpSolution(y, mu, nu, MAX_ITER, 0.0, it, tuple(rows))
        sol.kkt_residual = kkt_residual(qp, sol)
        return sol

    def _polish(self, qp, rows, sol):
        """Re-solve the KKT system of the final active set against the
        unregularized Hessian, with one iterative-refinement pass, and keep
        the result when it is feasible and lowers the KKT residual."""
        n = qp.dim
        c_mat = np.vstack([qp.eq_mat, qp.ineq_mat[rows]])
        c_rhs = np.concatenate([qp.eq_rhs, qp.ineq_rhs[rows]])
        kc = c_mat.shape[0]
        if kc:
            kkt = np.block([[qp.hess, c_mat.T], [c_mat, np.zeros((kc, kc))]])
            rhs = np.concatenate([-qp.lin, c_rhs])
        else:
            kkt, rhs = qp.hess, -qp.lin
        z = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        z = z + np.linalg.lstsq(kkt, rhs - kkt @ z, rcond=None)[0]
        y = z[:n]
        nu = z[n:n + qp.n_eq]
        mu_w = z[n + qp.n_eq:]
        if mu_w.size and mu_w.min() < -self.tol:
            return None
        mu = np.zeros(qp.n_ineq)
        mu[rows] = np.maximum(mu_w, 0.0)
        cand = QpSolution(y, mu, nu, OPTIMAL, 0.0, sol.iterations, tuple(rows))
        cand.kkt_residual = kkt_residual(qp, cand)
        return cand if cand.kkt_residual < sol.kkt_residual else None

    def _solve_eqp(self, hess, lin, eq_mat, eq_rhs):
        """Minimize the quadratic subject to eq_mat y = eq_rhs only."""
        n = lin.size
        k = eq_mat.shape[0]
        kkt = np.block([[hess, eq_mat.T], [eq_mat, np.zeros((k, k))]]) if k else hess
        rhs = np.concatenate([-lin, eq_rhs]) if k else -lin
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        return sol[:n], sol[n:]

    def _kkt_step(self, hess, grad, eq_mat, act_mat):
        """Direction p solving the equality-constrained subproblem
        min 0.5 p'Hp + g'p  s.t.  E p = 0, A_W p = 0, with multipliers."""
        n = grad.size
        k = eq_mat.shape[0]
        m = act_mat.shape[0]
        c_mat = np.vstack([eq_mat, act_mat])
        kc = k + m
        if kc == 0:
            try:
                p = np.linalg.solve(hess, -grad)
            except np.linalg.LinAlgError:
                p = np.linalg.lstsq(hess, -grad, rcond=None)[0]
            return p, np.zeros(0), np.zeros(0)
        kkt = np.block([[hess, c_mat.T], [c_mat, np.zeros((kc, kc))]])
        rhs = np.concatenate([-grad, np.zeros(kc)])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        return sol[:n], sol[n:n + k], sol[n + k:]

    def _starting_point(self, qp, hess, warm_active):
        """Feasible point plus initial working set, or None if infeasible."""
        n = qp.dim
        if warm_active:
            rows = sorted(i for i in warm_active if i < qp.n_ineq)
            c_mat = np.vstack([qp.eq_mat, qp.ineq_mat[rows]])
            c_rhs = np.concatenate([qp.eq_rhs, qp.ineq_rhs[rows]])
            kc = c_mat.shape[0]
            kkt = np.block([[hess, c_mat.T], [c_mat, np.zeros((kc, kc))]])
            rhs = np.concatenate([-qp.lin, c_rhs])
            try:
                y = np.linalg.solve(kkt, rhs)[:n]
            except np.linalg.LinAlgError:
                y = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:n]
            if self._feasible(qp, y):
                return y, set(rows)

        if qp.n_eq:
            y = np.linalg.lstsq(qp.eq_mat, qp.eq_rhs, rcond=None)[0]
        else:
            y = np.zeros(n)
        if self._feasible(qp, y):
            return y, self._active_rows(qp, y)

        # Phase 1: minimize the worst inequality violation subject to the
        # equalities; the extra variable s bounds A y - b from above.
        c = np.zeros(n + 1)
        c[-1] = 1.0
        a_ub = np.hstack([qp.ineq_mat, -np.ones((qp.n_ineq, 1))])
        a_eq = np.hstack([qp.eq_mat, np.zeros((qp.n_eq, 1))]) if qp.n_eq else None
        res = linprog(c, A_ub=a_ub, b_ub=qp.ineq_rhs, A_eq=a_eq,
                      b_eq=qp.eq_rhs if qp.n_eq else None,
                      bounds=[(None, None)] * n + [(0.0, None)],
                      method="highs")
        if not res.success or res.x[-1] > self.feas_tol:
            return None
        y = res.x[:n]
        return y, self._active_rows(qp, y)

    def _feasible(self, qp, y) -> bool:
        if qp.n_eq and np.abs(qp.eq_mat @ y - qp.eq_rhs).max() > self.feas_tol:
            return False
        if qp.n_ineq and (qp.ineq_mat @ y - qp.ineq_rhs).max() > self.feas_tol:
            return False
        return True

    def _active_rows(self, qp, y) -> set:
        if not qp.n_ineq:
            return set()
        slack = qp.ineq_mat @ y - qp.ineq_rhs
        return set(np.nonzero(slack > -self.feas_tol)[0].tolist())


def solve(qp: QpProblem, tol: float = 1e-9, max_iter: int = 500) -> QpSolution:
    """One-shot cold-start solve."""
    return ActiveSetQp(tol=tol, max_iter=max_iter).solve(qp)
