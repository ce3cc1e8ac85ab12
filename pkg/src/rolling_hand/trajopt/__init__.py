"""Contact-implicit trajectory optimisation for in-hand rolling."""
from .initial import initial_guess
from .problem import Evaluation, Layout, ProblemError, RollingNLP, TrajoptSettings, build_problem, evaluate
from .solve import plan, solve, to_trajectory
from .solver import AugmentedLagrangian, SolveReport, SolverOptions
from .trajectory import Trajectory
from .validate import ValidationReport, validate_trajectory

__all__ = [
    "AugmentedLagrangian",
    "Evaluation",
    "Layout",
    "ProblemError",
    "RollingNLP",
    "SolveReport",
    "SolverOptions",
    "Trajectory",
    "TrajoptSettings",
    "ValidationReport",
    "build_problem",
    "evaluate",
    "initial_guess",
    "plan",
    "solve",
    "to_trajectory",
    "validate_trajectory",
]
