"""Goal-oriented adaptive finite elements for quadratic goal functionals."""
from .benchmarks import (BenchmarkProblem, convection_problem, evaluate_goal, force_problem,
                         get_problem, weighted_l2_problem)
from .driver import IterationRecord, RunHistory, cumulative_cost, fit_rate, run_goafem
from .estimators import IndicatorField, eta_indicators, zeta_indicators
from .fem import (CoefficientSet, ConfigurationError, DirichletSolver, FeSpace, LoadSet,
                  SolverError, assemble_bilinear, build_space, solve_dual, solve_primal)
from .marking import MarkedSet, MarkingError, doerfler_min, mark
from .mesh import Mesh, MeshError, initial_mesh, refine_nvb, uniform_refine

__version__ = "0.1.0"

__all__ = [
    "BenchmarkProblem", "CoefficientSet", "ConfigurationError", "DirichletSolver",
    "FeSpace", "IndicatorField", "IterationRecord", "LoadSet", "MarkedSet",
    "MarkingError", "Mesh", "MeshError", "RunHistory", "SolverError",
    "assemble_bilinear", "build_space", "convection_problem", "cumulative_cost",
    "doerfler_min", "eta_indicators", "evaluate_goal", "fit_rate", "force_problem",
    "get_problem", "initial_mesh", "mark", "refine_nvb", "run_goafem", "solve_dual",
    "solve_primal", "uniform_refine", "weighted_l2_problem", "zeta_indicators",
]
