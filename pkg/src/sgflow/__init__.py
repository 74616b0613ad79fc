"""Safe gradient flow trajectory control for a grid-interfacing inverter."""

from .model import (CostParams, GridSignals, Input, PlantParams, State,
                    continuous_dynamics, current_limit, current_limit_grad,
                    discrete_dynamics, dynamics_jacobians, power_output,
                    stage_cost, terminal_cost)
from .trajopt import (HorizonSpec, StackedEval, TrajectoryDecision,
                      TrajectoryNlp, eval_stacked, rollout)
from .qp import ActiveSetQp, QpProblem, QpSolution, kkt_residual
from .sgf import (ClassKappaSpec, FlowResult, FunctionalNlp, QpInfeasibleError,
                  SgfEngine, flow_to_convergence, nlp_kkt_residual,
                  sgf_direction, sgf_step)
from .controller import (DroopConfig, DroopController, EquilibriumResult,
                         StgfConfig, StgfController, droop_step,
                         solve_equilibrium)
from .sim import Scenario, SimRecord, SimulationError, integrate_plant, run_scenario

__version__ = "0.1.0"
