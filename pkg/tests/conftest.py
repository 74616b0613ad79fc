"""Shared fixtures: the reference scenario is expensive (300 optimization
cycles), so closed-loop records are computed once per session."""

import numpy as np
import pytest

from sgflow.config import config_from_dict, final_references
from sgflow.cli import _build_controller
from sgflow.controller import solve_equilibrium
from sgflow.sim import run_scenario


@pytest.fixture(scope="session")
def default_cfg():
    return config_from_dict({})


@pytest.fixture(scope="session")
def stgf_record(default_cfg):
    controller = _build_controller(default_cfg, "stgf")
    return run_scenario(default_cfg.scenario, controller, default_cfg.plant,
                        default_cfg.cost)


@pytest.fixture(scope="session")
def droop_record(default_cfg):
    controller = _build_controller(default_cfg, "droop")
    return run_scenario(default_cfg.scenario, controller, default_cfg.plant,
                        default_cfg.cost)


@pytest.fixture(scope="session")
def step_equilibrium(default_cfg):
    """Optimal steady state for the references in effect at scenario end."""
    p_ref, q_ref = final_references(default_cfg)
    cost = default_cfg.cost.with_references(p_ref, q_ref)
    return solve_equilibrium(cost, default_cfg.plant, default_cfg.grid)
