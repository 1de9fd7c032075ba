"""Benchmark problems on the unit square with quadratic goal functionals.

All three use ``A = I, b = 0, c = 0``.  Each goal ``G(w) = b(w, w)`` comes
with its dual right-hand side in the form

    b(v, w) + b(w, v) = (g[w], v) - (gvec[w], grad v),

so the linearized dual problem is assembled exactly like the primal one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fem import CoefficientSet, ConfigurationError, FeSpace, LoadSet
from .fields import AnalyticField, Field, PiecewiseField, constant
from .mesh import Mesh, initial_mesh, uniform_refine
from .quadrature import triangle_rule

SQRT1_2 = np.sqrt(0.5)


def in_U1(x, y):
    return (x > 0.25) & (x < 0.75) & (y > 0.25) & (y < 0.75)


def in_U2(x, y):
    return (x > 0.5) & (x < 1.0) & (y > 0.0) & (y < 0.5)


def in_U3(x, y):
    return x - y >= 0.25


class DualField(Field):
    """One component of the dual right-hand side generated by a goal
    at a fixed discrete linearization point ``w``."""

    def __init__(self, goal: "GoalDescriptor", space: FeSpace, w: np.ndarray, part: str):
        self.goal = goal
        self.space = space
        self.w = np.asarray(w, dtype=float)
        self.part = part
        self.shape = () if part == "g" else (2,)

    def _values(self, mesh, bary):
        if mesh is not self.space.mesh:
            raise ValueError("dual field evaluated on a foreign mesh")
        return self.goal.dual_values(mesh, bary, *self.space.evaluate(self.w, bary))

    def evaluate(self, mesh, bary):
        g, gvec, _ = self._values(mesh, bary)
        return g if self.part == "g" else gvec

    def divergence(self, mesh, bary):
        if self.part == "g":
            raise TypeError("scalar field has no divergence")
        return self._values(mesh, bary)[2]


class GoalDescriptor:
    """Quadratic goal functional ``G(w) = b(w, w)``."""

    variant: str = ""
    exact_goal: float | None = None
    compact: bool = True

    def integrand(self, mesh, bary, val, grad) -> np.ndarray:
        raise NotImplementedError

    def dual_values(self, mesh, bary, val, grad, hess):
        """``(g, gvec, div gvec)`` at the quadrature points."""
        raise NotImplementedError

    def regions(self) -> list[PiecewiseField]:
        return []

    def evaluate(self, space: FeSpace, w: np.ndarray) -> float:
        bary, wq = triangle_rule(2 * space.p + 2)
        val, grad, _ = space.evaluate(w, bary)
        dens = self.integrand(space.mesh, bary, val, grad)
        return float(space.mesh.areas @ (dens @ wq))

    def dual_rhs(self, space: FeSpace, w: np.ndarray) -> tuple[Field, Field]:
        """Fields ``(g[w], gvec[w])`` linearized at ``w``."""
        return DualField(self, space, w, "g"), DualField(self, space, w, "gvec")


class WeightedL2Goal(GoalDescriptor):
    """``G(w) = int lambda w^2`` with ``lambda`` the indicator of U1."""

    variant = "weighted_l2"

    def __init__(self, exact_goal: float | None = None):
        self.weight = PiecewiseField(in_U1, constant(1.0), constant(0.0))
        self.exact_goal = exact_goal

    def regions(self):
        return [self.weight]

    def integrand(self, mesh, bary, val, grad):
        return self.weight.evaluate(mesh, bary) * val ** 2

    def dual_values(self, mesh, bary, val, grad, hess):
        g = 2.0 * self.weight.evaluate(mesh, bary) * val
        zero = np.zeros(val.shape + (2,))
        return g, zero, np.zeros(val.shape)


class ConvectionGoal(GoalDescriptor):
    """``G(w) = int w lambda . grad w`` with a piecewise constant direction."""

    variant = "convection"

    def __init__(self):
        d = SQRT1_2 * np.array([-1.0, 1.0])
        self.direction = PiecewiseField(in_U2, constant(d), constant(-d))

    def regions(self):
        return [self.direction]

    def integrand(self, mesh, bary, val, grad):
        lam = self.direction.evaluate(mesh, bary)
        return val * np.einsum("mqd,mqd->mq", lam, grad)

    def dual_values(self, mesh, bary, val, grad, hess):
        lam = self.direction.evaluate(mesh, bary)
        lam_grad = np.einsum("mqd,mqd->mq", lam, grad)
        return lam_grad, -val[..., None] * lam, -lam_grad


class GridCutoff:
    """Piecewise linear cutoff on the ``n x n`` initial grid: one at grid
    nodes in the closure of U1, zero at all other nodes."""

    def __init__(self, n: int):
        self.n = n
        s = np.arange(n + 1) / n
        inside = (s >= 0.25) & (s <= 0.75)
        self.nodal = (inside[:, None] & inside[None, :]).astype(float)  # [i, j]

    def _locate(self, x, y):
        n = self.n
        i = np.clip(np.floor(x * n).astype(int), 0, n - 1)
        j = np.clip(np.floor(y * n).astype(int), 0, n - 1)
        lower = (x * n - i) > (y * n - j)
        return i, j, lower

    def gradient(self, mesh: Mesh) -> np.ndarray:
        """Elementwise constant gradient, shape (M, 2); requires every
        element to lie inside one initial-grid triangle."""
        c = mesh.centroids
        i, j, lower = self._locate(c[:, 0], c[:, 1])
        P = self.nodal
        sw, se, ne, nw = P[i, j], P[i + 1, j], P[i + 1, j + 1], P[i, j + 1]
        gx = np.where(lower, se - sw, ne - nw)
        gy = np.where(lower, ne - se, nw - sw)
        return self.n * np.column_stack([gx, gy])

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        i, j, lower = self._locate(x, y)
        xi, upsilon = x * self.n - i, y * self.n - j
        P = self.nodal
        sw, se, ne, nw = P[i, j], P[i + 1, j], P[i + 1, j + 1], P[i, j + 1]
        return np.where(lower, sw + (se - sw) * xi + (ne - se) * upsilon,
                        sw + (ne - nw) * xi + (nw - sw) * upsilon)


class ForceGoal(GoalDescriptor):
    """Maxwell-stress force ``int grad psi . (grad w (x) grad w - |grad w|^2 I / 2) chi``."""

    variant = "force"
    compact = False

    def __init__(self, n: int):
        self.cutoff = GridCutoff(n)
        self.chi = SQRT1_2 * np.array([1.0, 1.0])

    def integrand(self, mesh, bary, val, grad):
        gpsi = np.broadcast_to(self.cutoff.gradient(mesh)[:, None, :], grad.shape)
        chi = self.chi
        return (np.einsum("mqd,mqd->mq", gpsi, grad) * (grad @ chi)
                - 0.5 * np.einsum("mqd,mqd->mq", grad, grad) * (gpsi @ chi))

    def dual_values(self, mesh, bary, val, grad, hess):
        gpsi = np.broadcast_to(self.cutoff.gradient(mesh)[:, None, :], grad.shape)
        chi = self.chi
        psi_chi = gpsi @ chi  # (M, nq)
        psi_w = np.einsum("mqd,mqd->mq", gpsi, grad)
        chi_w = grad @ chi
        gvec = psi_chi[..., None] * grad - psi_w[..., None] * chi - chi_w[..., None] * gpsi
        div = psi_chi * np.trace(hess, axis1=-2, axis2=-1) \
            - 2.0 * ((hess @ chi) * gpsi).sum(axis=-1)
        return np.zeros(val.shape), gvec, div


@dataclass(frozen=True)
class BenchmarkProblem:
    name: str
    coeffs: CoefficientSet
    loads: LoadSet
    goal: GoalDescriptor
    n0: int = 8
    exact_solution: Callable | None = None
    exact_gradient: Callable | None = None
    regions: tuple = field(default=(), repr=False)

    @property
    def exact_goal(self) -> float | None:
        return self.goal.exact_goal

    def initial_mesh(self, extra_uniform: int = 0) -> Mesh:
        """The initial triangulation; raises if it fails to resolve the
        piecewise data."""
        mesh = initial_mesh(self.n0)
        for _ in range(extra_uniform):
            mesh = uniform_refine(mesh)
        for region in self.regions + tuple(self.goal.regions()):
            if not region.resolved_by(mesh):
                raise ConfigurationError(
                    f"initial mesh (n={self.n0}) does not resolve the data of {self.name}")
        return mesh


WEIGHTED_L2_EXACT = 41209 / 58982400


def _check_grid(n: int, minimum: int = 4) -> int:
    if int(n) != n or n < minimum or n % 4:
        raise ConfigurationError(
            f"grid size must be a multiple of 4 and at least {minimum}, got {n!r}")
    return int(n)


def weighted_l2_problem(n: int = 8) -> BenchmarkProblem:
    """Smooth solution, goal ``int_U1 u^2``, exact value 41209/58982400."""
    n = _check_grid(n)
    f = AnalyticField(lambda x, y: 2 * x * (x - 1) + 2 * y * (y - 1))
    return BenchmarkProblem(
        name="weighted_l2",
        coeffs=CoefficientSet(),
        loads=LoadSet(f=f),
        goal=WeightedL2Goal(WEIGHTED_L2_EXACT),
        n0=n,
        # -laplace(u) = f holds for u = -xy(1-x)(1-y)
        exact_solution=lambda x, y: -x * y * (1 - x) * (1 - y),
        exact_gradient=lambda x, y: -np.stack(
            [y * (1 - y) * (1 - 2 * x), x * (1 - x) * (1 - 2 * y)], axis=-1),
    )


def convection_problem(n: int = 8) -> BenchmarkProblem:
    """Flux load supported on U3, convection goal; no exact reference."""
    n = _check_grid(n)
    fvec = PiecewiseField(in_U3, constant(SQRT1_2 * np.array([-1.0, 1.0])),
                          constant(np.zeros(2)))
    return BenchmarkProblem(
        name="convection",
        coeffs=CoefficientSet(),
        loads=LoadSet(fvec=fvec),
        goal=ConvectionGoal(),
        n0=n,
        regions=(fvec,),
    )


def force_problem(n: int = 8) -> BenchmarkProblem:
    """Unit load, force goal with cutoff falling off within one element
    layer around U1; the goal operator is not compact."""
    n = _check_grid(n, minimum=8)
    return BenchmarkProblem(
        name="force",
        coeffs=CoefficientSet(),
        loads=LoadSet(f=constant(1.0)),
        goal=ForceGoal(n),
        n0=n,
    )


PROBLEMS = {
    "weighted_l2": weighted_l2_problem,
    "convection": convection_problem,
    "force": force_problem,
}


def get_problem(name: str, n: int = 8) -> BenchmarkProblem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(n)


def evaluate_goal(problem: BenchmarkProblem, space: FeSpace, w_h: np.ndarray) -> float:
    return problem.goal.evaluate(space, w_h)
