"""Command line front end: run / equilibrium / bench / check.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import datetime
import math
import sys

import numpy as np

from . import checks, model
from .config import ConfigError, RunConfig, final_references, load_config
from .controller import DroopController, StgfController, solve_equilibrium
from .model import Input
from .sim import SimRecord, SimulationError, run_scenario


def _build_controller(cfg: RunConfig, ctrl_type=None):
    ctrl_type = ctrl_type or cfg.ctrl_type
    u_init = cfg.scenario.u_init
    if u_init is None:
        u_init = Input(cfg.grid.e_mag, cfg.grid.omega_e)
    if ctrl_type == "stgf":
        return StgfController(cfg.stgf, cfg.plant, cfg.grid, cfg.cost,
                              cfg.scenario.x0, u_init)
    return DroopController(cfg.droop, cfg.scenario.dt)


def write_csv(record: SimRecord, path, timestamp=True):
    """CSV with 17 significant digits; solve_time_us is wall-clock dependent
    and is written as 0 when the timestamp is suppressed, so identical
    configurations produce byte-identical files."""
    lines = []
    if timestamp:
        lines.append(f"# generated {datetime.datetime.now().isoformat()}")
    lines.append(",".join(SimRecord.COLUMNS))
    solve_col = record.solve_time_us if timestamp else np.zeros(len(record))
    for k in range(len(record)):
        row = []
        for name in SimRecord.COLUMNS:
            val = solve_col[k] if name == "solve_time_us" else record.column(name)[k]
            row.append(f"{val:.17g}")
        lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path):
    """Parse a CSV written by write_csv back into a SimRecord."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line == ",".join(SimRecord.COLUMNS):
                continue
            rows.append([float(tok) for tok in line.split(",")])
    data = np.array(rows, dtype=float).reshape(len(rows), len(SimRecord.COLUMNS))
    return SimRecord(*(data[:, i] for i in range(len(SimRecord.COLUMNS))))


def _summary(record: SimRecord):
    if len(record) == 0:
        return "empty record"
    solve = record.solve_time_us
    return "\n".join([
        f"final P = {record.p[-1]:.6f} pu, Q = {record.q[-1]:.6f} pu",
        f"final V = {record.v[-1]:.6f} pu, omega = {record.omega[-1]:.4f} rad/s",
        f"max |I_dq| = {record.i_mag.max():.6f} pu",
        f"solve time median = {np.median(solve):.1f} us, max = {solve.max():.1f} us",
        f"qp infeasible cycles = {int(record.qp_infeasible.sum())}, "
        f"limiter active cycles = {int(record.limiter_active.sum())}",
    ])


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    controller = _build_controller(cfg)
    try:
        record = run_scenario(cfg.scenario, controller, cfg.plant, cfg.cost)
    except SimulationError as exc:
        print(f"simulation failed at step {exc.step_index}: {exc}", file=sys.stderr)
        return 1
    write_csv(record, args.output, timestamp=not args.no_timestamp)
    print(f"wrote {len(record)} rows to {args.output}")
    print(_summary(record))
    return 0


def cmd_equilibrium(args) -> int:
    cfg = load_config(args.config)
    p_ref, q_ref = final_references(cfg)
    cost = cfg.cost.with_references(p_ref, q_ref)
    res = solve_equilibrium(cost, cfg.plant, cfg.grid, tol=args.tol)
    p_out, q_out = model.power_output(res.x, cfg.grid)
    print(f"references: p_ref = {p_ref} pu, q_ref = {q_ref} pu")
    print(f"x* = (i_d {res.x.i_d:.8f}, i_q {res.x.i_q:.8f}, "
          f"delta {res.x.delta:.8f})")
    print(f"u* = (v {res.u.v:.8f} pu, omega {res.u.omega:.6f} rad/s)")
    print(f"achieved P = {p_out:.8f} pu, Q = {q_out:.8f} pu")
    print(f"cost = {res.cost:.10f}")
    print(f"kkt residual = {res.kkt_residual:.3e}")
    i_mag = math.hypot(res.x.i_d, res.x.i_q)
    print(f"|I_dq| = {i_mag:.6f} pu, constraint "
          f"{'active' if res.constraint_active else 'inactive'} "
          f"(multiplier {res.mu:.6f})")
    if not res.converged:
        print("warning: best iterate did not reach tolerance", file=sys.stderr)
        return 1
    return 0


def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    if args.repetitions < 1:
        print("repetitions must be >= 1", file=sys.stderr)
        return 2
    results = {}
    for ctrl_type in ("stgf", "droop"):
        samples = []
        for _ in range(args.repetitions):
            controller = _build_controller(cfg, ctrl_type)
            try:
                record = run_scenario(cfg.scenario, controller, cfg.plant, cfg.cost)
            except SimulationError as exc:
                print(f"{ctrl_type} failed at step {exc.step_index}: {exc}",
                      file=sys.stderr)
                return 1
            samples.append(record.solve_time_us)
        results[ctrl_type] = np.concatenate(samples) if samples else np.zeros(0)
    for ctrl_type, samples in results.items():
        if samples.size == 0:
            print(f"{ctrl_type}: no samples")
            continue
        print(f"{ctrl_type}: n = {samples.size}, min = {samples.min():.1f} us, "
              f"median = {np.median(samples):.1f} us, "
              f"p99 = {np.percentile(samples, 99):.1f} us, "
              f"max = {samples.max():.1f} us")
    return 0


def cmd_check(args) -> int:
    results = checks.run_all(fast=args.fast)
    failed = 0
    for res in results:
        tag = "PASS" if res.passed else "FAIL"
        print(f"[{tag}] {res.name}: {res.detail}")
        if not res.passed:
            failed += 1
    return 0 if failed == 0 else 1


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgflow",
        description="Safe gradient flow inverter control toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a closed-loop scenario and write CSV")
    p_run.add_argument("config", nargs="?", default=None,
                       help="TOML config (defaults apply when omitted)")
    p_run.add_argument("-o", "--output", default="run.csv")
    p_run.add_argument("--no-timestamp", action="store_true",
                       help="suppress the timestamp comment and wall-clock "
                            "columns for byte-reproducible output")
    p_run.set_defaults(func=cmd_run)

    p_eq = sub.add_parser("equilibrium",
                          help="solve the steady-state problem for the "
                               "references in effect at scenario end")
    p_eq.add_argument("config", nargs="?", default=None)
    p_eq.add_argument("--tol", type=float, default=1e-8)
    p_eq.set_defaults(func=cmd_equilibrium)

    p_bench = sub.add_parser("bench", help="per-cycle solve-time distribution")
    p_bench.add_argument("config", nargs="?", default=None)
    p_bench.add_argument("-r", "--repetitions", type=int, default=1)
    p_bench.set_defaults(func=cmd_bench)

    p_check = sub.add_parser("check", help="run the verification suites")
    p_check.add_argument("--fast", action="store_true")
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        key = f" (key: {exc.key})" if exc.key else ""
        print(f"config error: {exc}{key}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"runtime error at step {exc.step_index}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
