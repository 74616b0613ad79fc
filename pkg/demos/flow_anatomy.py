"""Anatomy of the safe gradient flow on a problem small enough to see.

Minimize 1/2 ||w - target||^2 with the target outside the unit disc
||w|| <= 1.  Plain gradient descent marches straight at the target and
leaves the disc.  The safe flow solves, at every point, a minimum-alteration
QP that bends the descent direction just enough to keep the disc invariant;
the trajectory curves along the boundary and stops at the projection of the
target, where the constraint multiplier balances the cost gradient.

Run:  python3 demos/flow_anatomy.py
"""

import numpy as np

from sgflow.sgf import ClassKappaSpec, FunctionalNlp, SgfEngine

TARGET = np.array([1.8, 0.9])


def make_nlp():
    def cost(w):
        return 0.5 * float((w - TARGET) @ (w - TARGET)), w - TARGET

    def disc(w):
        return np.array([w @ w - 1.0]), 2.0 * w[None, :]

    return FunctionalNlp(2, cost, disc)


def main():
    nlp = make_nlp()
    engine = SgfEngine(ClassKappaSpec())
    xi = 1e-3

    w_flow = np.array([-0.5, -0.5])
    w_gd = w_flow.copy()
    print(f"target {TARGET} sits at radius {np.linalg.norm(TARGET):.3f}; "
          f"the feasible disc has radius 1")
    print(f"{'iter':>6} {'|w_flow|':>9} {'|w_gd|':>8} {'mu':>8} "
          f"{'|wdot|':>9}")
    for it in range(6001):
        res = engine.direction(nlp, w_flow)
        if it % 1000 == 0:
            print(f"{it:>6} {np.linalg.norm(w_flow):>9.5f} "
                  f"{np.linalg.norm(w_gd):>8.4f} {float(res.mu[0]):>8.4f} "
                  f"{np.linalg.norm(res.direction):>9.2e}")
        w_flow = w_flow + xi * res.direction
        w_gd = w_gd - xi * (w_gd - TARGET)

    proj = TARGET / np.linalg.norm(TARGET)
    print()
    print(f"flow endpoint      : {w_flow}")
    print(f"disc projection    : {proj}")
    print(f"gradient descent   : {w_gd}  (infeasible, |w| = "
          f"{np.linalg.norm(w_gd):.3f})")
    print(f"endpoint error     : {np.abs(w_flow - proj).max():.2e}")


if __name__ == "__main__":
    main()
