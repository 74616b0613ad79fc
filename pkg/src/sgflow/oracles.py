"""Independent verification routines.

These deliberately avoid the code paths they check: finite differences for
analytic derivatives, exhaustive active-set enumeration for the dense QP
solver, and a primal-form flow QP (solved by cvxpy) for the minimum-
alteration direction.
"""

from __future__ import annotations

import itertools

import numpy as np

from .qp import QpProblem


def finite_difference_gradient(fun, w, h=1e-6):
    """Central finite differences of a scalar function."""
    w = np.asarray(w, dtype=float)
    grad = np.zeros(w.size)
    for i in range(w.size):
        e = np.zeros(w.size)
        e[i] = h
        grad[i] = (fun(w + e) - fun(w - e)) / (2.0 * h)
    return grad


def finite_difference_jacobian(fun, w, h=1e-6):
    """Central finite differences of a vector function."""
    w = np.asarray(w, dtype=float)
    f0 = np.atleast_1d(np.asarray(fun(w), dtype=float))
    jac = np.zeros((f0.size, w.size))
    for i in range(w.size):
        e = np.zeros(w.size)
        e[i] = h
        fp = np.atleast_1d(np.asarray(fun(w + e), dtype=float))
        fm = np.atleast_1d(np.asarray(fun(w - e), dtype=float))
        jac[:, i] = (fp - fm) / (2.0 * h)
    return jac


def enumerate_qp(qp: QpProblem, feas_tol=1e-8, mult_tol=1e-8):
    """Brute-force QP solve: try every subset of inequality rows as the
    active set, solve the equality-constrained subproblem, keep the best
    KKT-consistent candidate.  Returns (y, mu, nu) or None if infeasible.

    Only sensible for a handful of inequality rows.
    """
    n = qp.dim
    best = None
    best_obj = np.inf
    for subset in itertools.chain.from_iterable(
            itertools.combinations(range(qp.n_ineq), r)
            for r in range(qp.n_ineq + 1)):
        act = list(subset)
        c_mat = np.vstack([qp.eq_mat, qp.ineq_mat[act]])
        c_rhs = np.concatenate([qp.eq_rhs, qp.ineq_rhs[act]])
        kc = c_mat.shape[0]
        kkt = np.block([[qp.hess, c_mat.T], [c_mat, np.zeros((kc, kc))]]) \
            if kc else qp.hess
        rhs = np.concatenate([-qp.lin, c_rhs]) if kc else -qp.lin
        try:
            sol, residuals, rank, _ = np.linalg.lstsq(kkt, rhs, rcond=None)
        except np.linalg.LinAlgError:
            continue
        if np.abs(kkt @ sol - rhs).max() > 1e-7 * max(1.0, np.abs(rhs).max()):
            continue
        y = sol[:n]
        nu = sol[n:n + qp.n_eq]
        mu_act = sol[n + qp.n_eq:]
        if mu_act.size and mu_act.min() < -mult_tol:
            continue
        if qp.n_ineq:
            slack = qp.ineq_mat @ y - qp.ineq_rhs
            if slack.max() > feas_tol:
                continue
        obj = qp.objective(y)
        if obj < best_obj - 1e-14:
            mu = np.zeros(qp.n_ineq)
            mu[act] = np.maximum(mu_act, 0.0)
            best = (y, mu, nu)
            best_obj = obj
    return best


def primal_flow_direction(grad, g_vals, g_jac, h_vals, h_jac, kappa,
                          solver=None):
    """Flow direction from the primal form:

        minimize  || wdot + grad ||^2
        s.t.      Jg wdot <= -alpha(g)
                  Jh wdot  = -alpha_eq(h)

    Solved with cvxpy as a cross-implementation check of the dual-form QP.
    """
    import cvxpy as cp

    n = grad.size
    wdot = cp.Variable(n)
    constraints = []
    if g_vals.size:
        constraints.append(g_jac @ wdot <= -kappa.alpha_ineq(g_vals))
    if h_vals.size:
        constraints.append(h_jac @ wdot == -kappa.alpha_eq(h_vals))
    prob = cp.Problem(cp.Minimize(cp.sum_squares(wdot + grad)), constraints)
    kwargs = {}
    if solver is None:
        solver = "CLARABEL" if "CLARABEL" in cp.installed_solvers() else None
    if solver:
        kwargs["solver"] = solver
    if solver == "CLARABEL":
        kwargs.update(tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    prob.solve(**kwargs)
    if wdot.value is None:
        raise RuntimeError(f"primal flow QP not solved: status {prob.status}")
    return np.asarray(wdot.value, dtype=float).ravel()
