"""Goal-oriented adaptive loops and post-processing of their histories."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields

import numpy as np

from .benchmarks import BenchmarkProblem
from .estimators import IndicatorField, eta_indicators, zeta_indicators
from .fem import (DirichletSolver, FeSpace, SolverError, assemble_bilinear,
                  assemble_dual_rhs, assemble_primal_rhs, build_space)
from .marking import MarkedSet, MarkingError, mark, verify
from .mesh import Mesh, refine_nvb, uniform_refine

log = logging.getLogger(__name__)

STRATEGY_CHOICES = ("A", "B", "BET1", "BET2", "uniform")


@dataclass(frozen=True)
class IterationRecord:
    level: int
    n_elements: int
    n_dofs: int
    eta: float
    zeta: float
    product: float
    combined: float
    goal_value: float
    goal_error: float | None
    n_marked: int
    strategy: str
    theta: float

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class LevelState:
    """Everything computed on one level, handed to ``on_level`` callbacks."""

    level: int
    mesh: Mesh
    space: FeSpace
    u: np.ndarray
    z: np.ndarray
    indicators: IndicatorField
    marked: MarkedSet | None
    record: IterationRecord


class RunHistory(list):
    """List of :class:`IterationRecord` with completion status."""

    def __init__(self, records=(), complete: bool = True, reason: str = ""):
        super().__init__(records)
        self.complete = complete
        self.reason = reason


def solve_level(problem: BenchmarkProblem, mesh: Mesh, p: int):
    """Primal solve, linearization at the discrete solution, dual solve
    and both indicator fields on one mesh."""
    space = build_space(mesh, p)
    matrix = assemble_bilinear(space, problem.coeffs)
    solver = DirichletSolver(matrix, space.dirichlet_mask)
    u = solver.solve(assemble_primal_rhs(space, problem.loads))
    g, gvec = problem.goal.dual_rhs(space, u)
    z = solver.solve_transposed(assemble_dual_rhs(space, g, gvec))
    ind = IndicatorField(eta_indicators(space, u, problem.coeffs, problem.loads),
                         zeta_indicators(space, z, problem.coeffs, g, gvec), mesh)
    return space, u, z, ind


def run_goafem(problem: BenchmarkProblem, strategy: str = "A", theta: float = 0.5,
               p: int = 1, max_dofs: int = 100_000, max_levels: int = 100,
               mesh: Mesh | None = None, extra_uniform: int = 0,
               on_level=None) -> RunHistory:
    """Run the adaptive loop until the dof budget, the level cap, or an
    empty marking stops it.

    Parameters
    ----------
    problem : BenchmarkProblem
    strategy : {"A", "B", "BET1", "BET2", "uniform"}
    theta : float in (0, 1]
    p : polynomial degree, 1 or 2
    max_dofs : the loop stops after the first level with more dofs
    max_levels : index of the last level that may be computed
    mesh : initial mesh; defaults to ``problem.initial_mesh(extra_uniform)``
    on_level : optional callable receiving a :class:`LevelState`

    Returns
    -------
    RunHistory
        One record per computed level.  A failed solve ends the run with
        ``complete = False``.
    """
    if strategy not in STRATEGY_CHOICES:
        raise MarkingError(f"unknown strategy {strategy!r}")
    if not 0.0 < theta <= 1.0:
        raise MarkingError(f"theta must lie in (0, 1], got {theta}")
    mesh = problem.initial_mesh(extra_uniform) if mesh is None else mesh
    history = RunHistory()
    exact = problem.exact_goal
    level = 0
    while True:
        try:
            space, u, z, ind = solve_level(problem, mesh, p)
        except SolverError as exc:
            log.error("level %d: %s", level, exc)
            history.complete = False
            history.reason = f"solver failure on level {level}: {exc}"
            return history
        eta, zeta = ind.eta, ind.zeta
        combined = eta ** 2 + zeta ** 2
        goal = problem.goal.evaluate(space, u)
        stop = space.n_dofs > max_dofs or level >= max_levels
        marked = None
        if not stop:
            if strategy == "uniform":
                n_marked = mesh.n_elements
            else:
                marked = mark(strategy, ind.eta_sq, ind.zeta_sq, theta)
                if not verify(marked):
                    raise AssertionError(f"level {level}: marking violates its inequality")
                n_marked = len(marked)
        else:
            n_marked = 0
        record = IterationRecord(
            level=level, n_elements=mesh.n_elements, n_dofs=space.n_dofs,
            eta=eta, zeta=zeta, product=eta * math.sqrt(combined), combined=combined,
            goal_value=goal, goal_error=None if exact is None else abs(exact - goal),
            n_marked=n_marked, strategy=strategy, theta=float(theta))
        history.append(record)
        log.info("level %d: %d elements, %d dofs, product %.3e",
                 level, record.n_elements, record.n_dofs, record.product)
        if on_level is not None:
            on_level(LevelState(level, mesh, space, u, z, ind, marked, record))
        if stop or n_marked == 0:
            return history
        if strategy == "uniform":
            mesh = uniform_refine(mesh)
        else:
            mesh = refine_nvb(mesh, marked.indices)
        level += 1


def _errors(records, which: str) -> np.ndarray:
    if which not in ("product", "goal_error", "eta", "zeta", "combined"):
        raise ValueError(f"unknown quantity {which!r}")
    vals = [getattr(r, which) for r in records]
    if any(v is None for v in vals):
        raise ValueError(f"{which} is not available for every level")
    return np.array(vals, dtype=float)


def cumulative_cost(records, tau: float, which: str = "product") -> int:
    """Total element count over all levels whose error is still >= tau."""
    if not len(records):
        raise ValueError("no records")
    err = _errors(records, which)
    n = np.array([r.n_elements for r in records])
    return int(n[err >= tau].sum())


def fit_rate(records, quantity: str = "product", window: float = 0.5,
             decades: float | None = None) -> float:
    """Least-squares slope of ``log(quantity)`` against ``log(n_elements)``.

    The fit uses the trailing ``window`` fraction of the records, or, if
    ``decades`` is given, all records whose element count lies within that
    many decades of the final one.  Nonpositive values are dropped.
    """
    n = np.array([r.n_elements for r in records], dtype=float)
    q = _errors(records, quantity)
    if decades is not None:
        sel = n >= n[-1] / 10.0 ** decades
    else:
        if not 0.0 < window <= 1.0:
            raise ValueError("window must be a fraction in (0, 1]")
        k = max(1, int(math.ceil(window * len(records))))
        sel = np.zeros(len(records), dtype=bool)
        sel[-k:] = True
    if sel.sum() < 4:
        raise ValueError("need at least 4 records in the fit window")
    sel &= q > 0
    if sel.sum() < 2:
        raise ValueError("no positive values in the fit window")
    slope, _ = np.polyfit(np.log(n[sel]), np.log(q[sel]), 1)
    return float(slope)
