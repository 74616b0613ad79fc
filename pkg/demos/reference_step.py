"""Reference-step walkthrough: drive the inverter into its current limit.

At cycle 100 the power references jump to p_ref = 2.5 pu, q_ref = -0.5 pu.
That operating point does not exist inside the 1 pu current disc, so the
controller has to ride the constraint boundary and settle at the closest
admissible trade-off instead.  This script runs the closed loop, prints the
transient in compact table form, and compares the final cycle against the
independently solved optimal steady state.

Run:  python3 demos/reference_step.py
"""

import numpy as np

from sgflow.cli import _build_controller
from sgflow.config import config_from_dict, final_references
from sgflow.controller import solve_equilibrium
from sgflow.model import power_output
from sgflow.sim import run_scenario


def main():
    cfg = config_from_dict({})          # the reference scenario, 300 x 1 ms
    controller = _build_controller(cfg, "stgf")
    record = run_scenario(cfg.scenario, controller, cfg.plant, cfg.cost)

    print("closed loop: 300 cycles at 1 ms, reference step at cycle 100")
    print(f"{'cycle':>6} {'P [pu]':>9} {'Q [pu]':>9} {'|I| [pu]':>9} "
          f"{'g(x)':>10} {'cost':>9}")
    for k in (0, 50, 99, 100, 105, 120, 150, 200, 299):
        print(f"{k:>6} {record.p[k]:>9.4f} {record.q[k]:>9.4f} "
              f"{record.i_mag[k]:>9.4f} {record.g_val[k]:>10.3e} "
              f"{record.stage_cost[k]:>9.4f}")

    print()
    print(f"max |I| over the run : {record.i_mag.max():.6f} pu "
          f"(limit {cfg.plant.i_max} pu)")
    print(f"infeasible QP cycles : {int(record.qp_infeasible.sum())}")

    p_ref, q_ref = final_references(cfg)
    eq = solve_equilibrium(cfg.cost.with_references(p_ref, q_ref),
                           cfg.plant, cfg.grid)
    p_eq, q_eq = power_output(eq.x, cfg.grid)
    print()
    print("optimal constrained steady state (independent KKT solve):")
    print(f"  P = {p_eq:.6f} pu, Q = {q_eq:.6f} pu, "
          f"multiplier mu = {eq.mu:.4f}")
    print(f"  controller end-of-run error: "
          f"dP = {record.p[-1] - p_eq:+.5f}, dQ = {record.q[-1] - q_eq:+.5f}")


if __name__ == "__main__":
    main()
