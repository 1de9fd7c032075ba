"""Residual error indicators for the primal and the linearized dual problem.

For a discrete function ``v`` the squared indicator on element ``T`` is

    h_T^2 ||R_T(v)||^2_{L2(T)} + h_T ||J(v)||^2_{L2(dT minus boundary)}

with ``h_T`` the longest edge of ``T``.  ``R_T`` is the strong residual and
``J`` the jump of the normal flux; every interior edge contributes its full
jump to both neighbours.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import CoefficientSet, FeSpace, LoadSet
from .fields import Field, LinearCombination
from .quadrature import line_rule, triangle_rule


@dataclass(frozen=True, eq=False)
class IndicatorField:
    """Squared indicators of one mesh level."""

    eta_sq: np.ndarray
    zeta_sq: np.ndarray
    mesh: object = None

    def __post_init__(self):
        for arr in (self.eta_sq, self.zeta_sq):
            if np.any(~np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError("indicators must be finite and nonnegative")

    @property
    def eta(self) -> float:
        return float(np.sqrt(self.eta_sq.sum()))

    @property
    def zeta(self) -> float:
        return float(np.sqrt(self.zeta_sq.sum()))


def edge_points(space: FeSpace, t: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of edge parameters ``t`` on every local
    edge, shape (M, 3, nt, 3).

    The parameter runs from the lower to the higher global vertex index,
    so both neighbours of an edge see the same physical points.
    """
    tri = space.mesh.triangles
    M = tri.shape[0]
    out = np.zeros((M, 3, t.size, 3))
    for k in range(3):
        j = (k + 1) % 3
        forward = (tri[:, k] < tri[:, j])[:, None]
        s = np.where(forward, t[None, :], 1.0 - t[None, :])  # weight of vertex j
        out[:, k, :, k] = 1.0 - s
        out[:, k, :, j] = s
    return out


def outward_normals(space: FeSpace):
    """Unit outward normals and lengths of the local edges, (M, 3, 2) and (M, 3)."""
    p = space.mesh.coords
    e = p[:, [1, 2, 0]] - p
    length = np.linalg.norm(e, axis=2)
    # counterclockwise triangles: outward normal is the edge rotated clockwise
    n = np.stack([e[..., 1], -e[..., 0]], axis=-1) / length[..., None]
    return n, length


def residual_indicators(space: FeSpace, v: np.ndarray, A: Field, b: Field, c: Field,
                        f: Field, fvec: Field, degree: int | None = None) -> np.ndarray:
    """Squared indicators for the operator
    ``-div(A grad v + fvec) + b . grad v + c v - f``.
    """
    mesh = space.mesh
    degree = 2 * space.p + 4 if degree is None else degree
    h = mesh.diameters

    bary, w = triangle_rule(degree)
    val, grad, hess = space.evaluate(v, bary)
    Aq = A.evaluate(mesh, bary)
    divA = A.divergence(mesh, bary)
    res = -(np.einsum("mqde,mqde->mq", Aq, hess)
            + np.einsum("mqd,mqd->mq", divA, grad))
    res -= fvec.divergence(mesh, bary)
    res += np.einsum("mqd,mqd->mq", b.evaluate(mesh, bary), grad)
    res += c.evaluate(mesh, bary) * val
    res -= f.evaluate(mesh, bary)
    volume = h ** 2 * mesh.areas * (res ** 2 @ w)

    t, wt = line_rule(degree)
    M = mesh.n_elements
    eb = edge_points(space, t).reshape(M, 3 * t.size, 3)
    _, eg, _ = space.evaluate(v, eb)
    flux = np.matmul(A.evaluate(mesh, eb), eg[..., None])[..., 0] + fvec.evaluate(mesh, eb)
    flux = flux.reshape(M, 3, t.size, 2)
    normals, length = outward_normals(space)
    fn = (flux * normals[:, :, None, :]).sum(axis=-1)

    el2ed = mesh.element_edges
    jump = np.zeros((mesh.n_edges, t.size))
    np.add.at(jump, el2ed.ravel(), fn.reshape(-1, t.size))
    interior = mesh.edge_counts == 2
    edge_sq = np.where(interior, (jump ** 2) @ wt, 0.0)  # per unit length
    jump_term = h * np.sum(edge_sq[el2ed] * length, axis=1)
    return volume + jump_term


def eta_indicators(space: FeSpace, u_h: np.ndarray, coeffs: CoefficientSet,
                   loads: LoadSet) -> np.ndarray:
    """Primal indicators ``eta(T)^2``."""
    return residual_indicators(space, u_h, coeffs.A, coeffs.b, coeffs.c,
                               loads.f, loads.fvec)


def zeta_indicators(space: FeSpace, z_h: np.ndarray, coeffs: CoefficientSet,
                    g: Field, gvec: Field) -> np.ndarray:
    """Dual indicators ``zeta(T)^2``; the dual operator is
    ``-div(A grad z + gvec) - b . grad z + (c - div b) z - g``."""
    return residual_indicators(space, z_h, coeffs.A, -coeffs.b,
                               LinearCombination([(1.0, coeffs.c), (-1.0, coeffs.div_b)]),
                               g, gvec)
