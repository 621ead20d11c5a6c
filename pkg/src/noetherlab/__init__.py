"""Constrained time-dependent mechanics with numerical checks of Noether-type conservation laws."""

from .constraint import (
    MultiplierError,
    admissible_chart,
    in_admissible_hatV,
    in_reaction_annihilator,
    in_virtual_displacements,
    sample_manifold_states,
    solve_multipliers,
)
from .dynamics import PhaseState, Trajectory, integrate, project_to_manifold, vector_field
from .expr import DomainError, ParseError, diff, evaluate, fmt, parse
from .model import Force, MechSystem, ModelError, NaturalLagrangian, holonomic, kinematic
from .runner import RunResult, run_scenario
from .scenario import Scenario, ScenarioError, builtin_names, load_scenario, parse_scenario, resolve
from .symmetry import (
    OneForm,
    SymmetrySpec,
    bracket_defect,
    generalized_symmetry_residuals,
    invariance_residual,
    noether_function,
    weak_noether_residual,
)
from .verify import Check, Report

__version__ = "0.1.0"

__all__ = [
    "MultiplierError",
    "admissible_chart",
    "in_admissible_hatV",
    "in_reaction_annihilator",
    "in_virtual_displacements",
    "sample_manifold_states",
    "solve_multipliers",
    "PhaseState",
    "Trajectory",
    "integrate",
    "project_to_manifold",
    "vector_field",
    "DomainError",
    "ParseError",
    "diff",
    "evaluate",
    "fmt",
    "parse",
    "Force",
    "MechSystem",
    "ModelError",
    "NaturalLagrangian",
    "holonomic",
    "kinematic",
    "RunResult",
    "run_scenario",
    "Scenario",
    "ScenarioError",
    "builtin_names",
    "load_scenario",
    "parse_scenario",
    "resolve",
    "OneForm",
    "SymmetrySpec",
    "bracket_defect",
    "generalized_symmetry_residuals",
    "invariance_residual",
    "noether_function",
    "weak_noether_residual",
    "Check",
    "Report",
]
