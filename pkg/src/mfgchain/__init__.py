"""Markov chain approximation solver for mean field games on [0, L] with two reflecting barriers."""

from .config import RunConfig, dump_config, load_config, parse_config
from .coupling import coupled_transition, estimate_contraction, simulate_coupled
from .errors import (
    ConfigError,
    DivisibilityError,
    GridMismatchError,
    IncrementError,
    MfgChainError,
    NumericalError,
    ParameterError,
    RangeError,
    SpecError,
)
from .fixedpoint import IterationReport, iterate, phi_map, picard_flow, solve_from_dirac
from .forward import evaluate_cost, propagate_marginals, simulate_path, simulate_paths, value_identity_gaps
from .grid import Discretization, build_discretization, floor_to_grid
from .mdp import Policy, ValueTable, backward_solve, hjb_residual, transition_probs
from .model import (
    Marginal,
    MeasureFlow,
    MfgModel,
    build_parametric_model,
    build_polynomial_model,
    flow_distance,
    preset_section5,
    w1_marginal,
)
from .runs import run_check, run_couple, run_solve
from .skorohod import solve_skorohod

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Discretization",
    "DivisibilityError",
    "GridMismatchError",
    "IncrementError",
    "IterationReport",
    "Marginal",
    "MeasureFlow",
    "MfgChainError",
    "MfgModel",
    "NumericalError",
    "ParameterError",
    "Policy",
    "RangeError",
    "RunConfig",
    "SpecError",
    "ValueTable",
    "backward_solve",
    "build_discretization",
    "build_parametric_model",
    "build_polynomial_model",
    "coupled_transition",
    "dump_config",
    "estimate_contraction",
    "evaluate_cost",
    "floor_to_grid",
    "flow_distance",
    "hjb_residual",
    "iterate",
    "load_config",
    "parse_config",
    "phi_map",
    "picard_flow",
    "preset_section5",
    "propagate_marginals",
    "run_check",
    "run_couple",
    "run_solve",
    "simulate_coupled",
    "simulate_path",
    "simulate_paths",
    "solve_from_dirac",
    "solve_skorohod",
    "transition_probs",
    "value_identity_gaps",
    "w1_marginal",
]
