"""TOML run configuration with strict key checking.

Every key is optional; defaults reproduce the reference scenario (300 steps
at 1 ms, reference step at index 100 to p_ref = 2.5, q_ref = -0.5).
Unknown keys are rejected with their full dotted name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:          # Python < 3.11
    import tomli as tomllib

from .controller import DroopConfig, StgfConfig
from .model import CostParams, GridSignals, Input, PlantParams, State
from .sgf import ClassKappaSpec
from .sim import Scenario
from .trajopt import HorizonSpec


class ConfigError(ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


_SCHEMA = {
    "plant": {"r_pu", "l_pu", "i_max_pu", "omega_base_rad_s", "v_base_v",
              "s_base_va", "i_base_a", "q_self_coupling"},
    "grid": {"e_pu", "f_hz", "k_pq"},
    "cost": {"m_p", "m_q", "tau_v", "p_ref_pu", "q_ref_pu", "v_nom_pu",
             "f_nom_hz"},
    "ctrl": {"type", "horizon", "k_updates", "xi", "alpha_gain", "alpha_rate",
             "alpha_kind", "eq_alpha_gain", "eq_alpha_kind",
             "k_p", "k_q", "tau_f", "i_thresh", "k_vi", "k_sync"},
    "sim": {"dt_ms", "n_steps", "substeps"},
    "scenario": {"steps", "x0", "u_init"},
}

_DEFAULT_STEPS = [[100, 2.5, -0.5]]


@dataclass
class RunConfig:
    plant: PlantParams
    grid: GridSignals
    cost: CostParams
    ctrl_type: str
    stgf: StgfConfig
    droop: DroopConfig
    scenario: Scenario


def _check_keys(data: dict):
    for section, keys in data.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]", key=section)
        if not isinstance(keys, dict):
            raise ConfigError(f"section [{section}] must be a table", key=section)
        for key in keys:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}",
                                  key=f"{section}.{key}")


def _num(section: dict, key: str, default, name: str):
    val = section.get(key, default)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{name} must be a number", key=name)
    return float(val)


def load_config(path: Optional[str] = None) -> RunConfig:
    data = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"config parse error: {exc}") from exc
    return config_from_dict(data)


def config_from_dict(data: dict) -> RunConfig:
    _check_keys(data)
    pl = data.get("plant", {})
    plant = PlantParams(
        r=_num(pl, "r_pu", 0.0069, "plant.r_pu"),
        l=_num(pl, "l_pu", 0.0196, "plant.l_pu"),
        i_max=_num(pl, "i_max_pu", 1.0, "plant.i_max_pu"),
        omega_base=_num(pl, "omega_base_rad_s", 2 * math.pi * 60.0,
                        "plant.omega_base_rad_s"),
        v_base=_num(pl, "v_base_v", 120.0, "plant.v_base_v"),
        s_base=_num(pl, "s_base_va", 1500.0, "plant.s_base_va"),
        i_base=_num(pl, "i_base_a", 4.167, "plant.i_base_a"),
        q_self_coupling=bool(pl.get("q_self_coupling", False)),
    )
    gr = data.get("grid", {})
    grid = GridSignals(
        e_mag=_num(gr, "e_pu", 1.0, "grid.e_pu"),
        omega_e=2 * math.pi * _num(gr, "f_hz", 60.0, "grid.f_hz"),
        k_pq=_num(gr, "k_pq", 1.5, "grid.k_pq"),
    )
    co = data.get("cost", {})
    cost = CostParams(
        m_p=_num(co, "m_p", 2 * math.pi, "cost.m_p"),
        m_q=_num(co, "m_q", 0.05, "cost.m_q"),
        tau_v=_num(co, "tau_v", 0.1, "cost.tau_v"),
        p_ref=_num(co, "p_ref_pu", 0.0, "cost.p_ref_pu"),
        q_ref=_num(co, "q_ref_pu", 0.0, "cost.q_ref_pu"),
        v_nom=_num(co, "v_nom_pu", 1.0, "cost.v_nom_pu"),
        omega_nom=2 * math.pi * _num(co, "f_nom_hz", 60.0, "cost.f_nom_hz"),
    )
    ct = data.get("ctrl", {})
    ctrl_type = ct.get("type", "stgf")
    if ctrl_type not in ("stgf", "droop"):
        raise ConfigError("ctrl.type must be 'stgf' or 'droop'", key="ctrl.type")
    sm = data.get("sim", {})
    dt = _num(sm, "dt_ms", 1.0, "sim.dt_ms") * 1e-3
    n_steps = int(_num(sm, "n_steps", 300, "sim.n_steps"))
    substeps = int(_num(sm, "substeps", 10, "sim.substeps"))
    if n_steps < 0:
        raise ConfigError("sim.n_steps must be >= 0", key="sim.n_steps")

    try:
        kappa = ClassKappaSpec(
            ineq_kind=ct.get("alpha_kind", "shifted_exponential"),
            ineq_gain=_num(ct, "alpha_gain", 20.0, "ctrl.alpha_gain"),
            ineq_rate=_num(ct, "alpha_rate", 10.0, "ctrl.alpha_rate"),
            eq_kind=ct.get("eq_alpha_kind", "linear"),
            eq_gain=_num(ct, "eq_alpha_gain", 20.0, "ctrl.eq_alpha_gain"),
            eq_rate=_num(ct, "alpha_rate", 10.0, "ctrl.alpha_rate"),
        )
        stgf = StgfConfig(
            spec=HorizonSpec(horizon_t=int(_num(ct, "horizon", 10, "ctrl.horizon")),
                             dt=dt),
            k_updates=int(_num(ct, "k_updates", 2, "ctrl.k_updates")),
            xi=_num(ct, "xi", 1e-3, "ctrl.xi"),
            kappa=kappa,
            n_steps=n_steps,
        )
        droop_defaults = DroopConfig()
        droop = DroopConfig(
            k_p=_num(ct, "k_p", droop_defaults.k_p, "ctrl.k_p"),
            k_q=_num(ct, "k_q", droop_defaults.k_q, "ctrl.k_q"),
            tau_f=_num(ct, "tau_f", droop_defaults.tau_f, "ctrl.tau_f"),
            i_thresh=_num(ct, "i_thresh", droop_defaults.i_thresh, "ctrl.i_thresh"),
            k_vi=_num(ct, "k_vi", droop_defaults.k_vi, "ctrl.k_vi"),
            k_sync=_num(ct, "k_sync", droop_defaults.k_sync, "ctrl.k_sync"),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid controller parameters: {exc}") from exc

    sc = data.get("scenario", {})
    steps = sc.get("steps", _DEFAULT_STEPS)
    schedule = []
    for entry in steps:
        if (not isinstance(entry, (list, tuple)) or len(entry) != 3
                or isinstance(entry[0], bool)):
            raise ConfigError(
                "scenario.steps entries must be [index, p_ref_pu, q_ref_pu]",
                key="scenario.steps")
        schedule.append((int(entry[0]), float(entry[1]), float(entry[2])))
    x0_raw = sc.get("x0", [0.0, 0.0, 0.0])
    if not isinstance(x0_raw, (list, tuple)) or len(x0_raw) != 3:
        raise ConfigError("scenario.x0 must be [i_d, i_q, delta]",
                          key="scenario.x0")
    x0 = State(float(x0_raw[0]), float(x0_raw[1]), float(x0_raw[2]))
    u_raw = sc.get("u_init", "sync")
    if u_raw == "sync":
        u_init = None
    elif isinstance(u_raw, (list, tuple)) and len(u_raw) == 2:
        u_init = Input(float(u_raw[0]), float(u_raw[1]))
    else:
        raise ConfigError("scenario.u_init must be 'sync' or [v, omega]",
                          key="scenario.u_init")
    try:
        scenario = Scenario(n_steps=n_steps, dt=dt, x0=x0, u_init=u_init,
                            ref_schedule=schedule,
                            grid_schedule=[(0, grid)], substeps=substeps)
    except ValueError as exc:
        raise ConfigError(str(exc), key="scenario") from exc

    return RunConfig(plant, grid, cost, ctrl_type, stgf, droop, scenario)


def final_references(cfg: RunConfig):
    """Reference values in effect at the end of the scenario."""
    p_ref, q_ref = cfg.cost.p_ref, cfg.cost.q_ref
    for idx, p, q in cfg.scenario.ref_schedule:
        if idx <= cfg.scenario.n_steps:
            p_ref, q_ref = p, q
    return p_ref, q_ref
