"""Equilibria of closed non-atomic resource allocation games.

Players of several types circulate through activities forever; scarce
resources create waiting delays. Equilibria are computed as maximizers of a
concave log-reward potential and checked directly against the definition.
"""

from .errors import (ClosedRagError, DivergenceError, InfeasibleError, InputError, LpError,
                     NonConvergenceError, ParticipationError, SolverError)
from .model import GameSpec, PlayerType, check_feasibility, check_participation, load_game, validate
from .linprog import LpProblem, LpSolution, optimal_allocation, solve_lp, value_curve
from .potential import Equilibrium, kkt_residual, potential_value, solve_potential
from .equilibrium import (VerificationReport, active_mass_fixed_point, best_response, delay_formula,
                          verify_equilibrium)
from .analysis import PoaReport, optimal_pricing, price_of_anarchy
from .smdp import SmdpSpec, build_rag, extract_policy, mass_to_rates, solve_smdp, verify_dp
from .dynamics import DynamicsTrace, convergence_report, simulate
from . import scenarios

__version__ = "0.1.0"

__all__ = [
    "ClosedRagError", "DivergenceError", "InfeasibleError", "InputError", "LpError",
    "NonConvergenceError", "ParticipationError", "SolverError",
    "GameSpec", "PlayerType", "check_feasibility", "check_participation", "load_game", "validate",
    "LpProblem", "LpSolution", "optimal_allocation", "solve_lp", "value_curve",
    "Equilibrium", "kkt_residual", "potential_value", "solve_potential",
    "VerificationReport", "active_mass_fixed_point", "best_response", "delay_formula",
    "verify_equilibrium",
    "PoaReport", "optimal_pricing", "price_of_anarchy",
    "SmdpSpec", "build_rag", "extract_policy", "mass_to_rates", "solve_smdp", "verify_dp",
    "DynamicsTrace", "convergence_report", "simulate",
    "scenarios",
]
