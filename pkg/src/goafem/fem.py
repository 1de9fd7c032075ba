"""P1/P2 Lagrange spaces, assembly and Dirichlet-reduced sparse solves.

Sign and index conventions: ``matrix[i, j] = a(phi_j, phi_i)`` (row = test
function, column = trial function), so the primal system is
``matrix @ u = F`` and the dual system, whose test function sits in the
first slot of ``a``, uses ``matrix.T``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import Field, constant, physical_points
from .mesh import Mesh
from .quadrature import triangle_rule


class ConfigurationError(ValueError):
    """Invalid problem data (coefficients, degree, ...)."""


class SolverError(RuntimeError):
    """The linear system could not be solved to the required accuracy."""


@dataclass(frozen=True)
class CoefficientSet:
    """Coefficients of ``a(u, v) = (A grad u, grad v) + (b . grad u, v) + (c u, v)``.

    ``div_b`` is only needed by the dual residual estimator.
    """

    A: Field = field(default_factory=lambda: constant(np.eye(2)))
    b: Field = field(default_factory=lambda: constant(np.zeros(2)))
    c: Field = field(default_factory=lambda: constant(0.0))
    div_b: Field = field(default_factory=lambda: constant(0.0))
    ellipticity: float = 1e-10

    def __post_init__(self):
        if self.A.shape != (2, 2) or self.b.shape != (2,) or self.c.shape != () \
                or self.div_b.shape != ():
            raise ConfigurationError("coefficient fields have wrong shapes")
        if not self.ellipticity > 0:
            raise ConfigurationError("ellipticity threshold must be positive")


@dataclass(frozen=True)
class LoadSet:
    """Right-hand side ``F(v) = (f, v) - (fvec, grad v)``."""

    f: Field = field(default_factory=lambda: constant(0.0))
    fvec: Field = field(default_factory=lambda: constant(np.zeros(2)))


def grad_barycentric(mesh: Mesh) -> np.ndarray:
    """Gradients of the barycentric coordinates, shape (M, 3, 2)."""
    p = mesh.coords
    two_area = 2.0 * mesh.signed_areas
    out = np.empty((mesh.n_elements, 3, 2))
    for i in range(3):
        e = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
        out[:, i, 0] = -e[:, 1] / two_area
        out[:, i, 1] = e[:, 0] / two_area
    return out


def shape_functions(p: int, bary: np.ndarray):
    """Reference basis in barycentric variables.

    Returns ``phi`` with shape ``bary.shape[:-1] + (nloc,)``, the
    derivatives ``dphi`` with respect to the three barycentric variables,
    shape ``(..., nloc, 3)``, and the constant second derivatives
    ``(nloc, 3, 3)``.  P2 local dofs are the three vertices followed by the
    midpoints of local edges (0,1), (1,2), (2,0).
    """
    lam = np.asarray(bary, dtype=float)
    lead = lam.shape[:-1]
    if p == 1:
        phi = lam.copy()
        dphi = np.broadcast_to(np.eye(3), lead + (3, 3)).copy()
        return phi, dphi, np.zeros((3, 3, 3))
    if p != 2:
        raise ConfigurationError(f"polynomial degree must be 1 or 2, got {p!r}")
    phi = np.empty(lead + (6,))
    dphi = np.zeros(lead + (6, 3))
    hess = np.zeros((6, 3, 3))
    for i in range(3):
        phi[..., i] = lam[..., i] * (2.0 * lam[..., i] - 1.0)
        dphi[..., i, i] = 4.0 * lam[..., i] - 1.0
        hess[i, i, i] = 4.0
        j = (i + 1) % 3
        phi[..., 3 + i] = 4.0 * lam[..., i] * lam[..., j]
        dphi[..., 3 + i, i] = 4.0 * lam[..., j]
        dphi[..., 3 + i, j] = 4.0 * lam[..., i]
        hess[3 + i, i, j] = hess[3 + i, j, i] = 4.0
    return phi, dphi, hess


@dataclass(frozen=True, eq=False)
class FeSpace:
    """Continuous Lagrange space of degree ``p`` with homogeneous
    Dirichlet conditions on the whole boundary."""

    mesh: Mesh
    p: int
    element_dofs: np.ndarray
    dof_coords: np.ndarray
    dirichlet_mask: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.dof_coords.shape[0]

    @property
    def n_free(self) -> int:
        return int((~self.dirichlet_mask).sum())

    @property
    def n_local(self) -> int:
        return self.element_dofs.shape[1]

    @cached_property
    def grad_lambda(self) -> np.ndarray:
        return grad_barycentric(self.mesh)

    def basis(self, bary: np.ndarray):
        """Values, physical gradients and Hessians of the local basis.

        Shapes: ``(M, nq, nloc)``, ``(M, nq, nloc, 2)``, ``(M, nloc, 2, 2)``.
        """
        phi, dphi, hess_lam = shape_functions(self.p, bary)
        G = self.grad_lambda
        M = self.mesh.n_elements
        if bary.ndim == 2:
            phi = np.broadcast_to(phi, (M,) + phi.shape)
            nq, nloc = dphi.shape[:2]
            grad = np.matmul(dphi.reshape(nq * nloc, 3), G).reshape(M, nq, nloc, 2)
        else:
            grad = np.matmul(dphi, G[:, None])
        GT = np.swapaxes(G, 1, 2)[:, None]
        hess = np.matmul(np.matmul(GT, hess_lam[None]), G[:, None])
        return phi, grad, hess

    def evaluate(self, w: np.ndarray, bary: np.ndarray):
        """Value, gradient and Hessian of the discrete function ``w``.

        Shapes: ``(M, nq)``, ``(M, nq, 2)``, ``(M, nq, 2, 2)``.
        """
        phi, dphi, hess_lam = shape_functions(self.p, bary)
        G = self.grad_lambda
        wl = np.asarray(w, dtype=float)[self.element_dofs]  # (M, nloc)
        if bary.ndim == 2:
            val = wl @ phi.T
            dw = np.tensordot(wl, dphi, axes=([1], [1]))  # (M, nq, 3)
        else:
            val = np.einsum("mqi,mi->mq", phi, wl)
            dw = np.einsum("mqia,mi->mqa", dphi, wl)
        g = np.matmul(dw, G)
        hl = np.tensordot(wl, hess_lam, axes=([1], [0]))  # (M, 3, 3)
        h = np.matmul(np.matmul(np.swapaxes(G, 1, 2), hl), G)
        h = np.broadcast_to(h[:, None], (h.shape[0], val.shape[1], 2, 2))
        return val, g, h

    def interpolate(self, fn) -> np.ndarray:
        """Nodal interpolant of ``fn(x, y)``, zeroed on Dirichlet dofs."""
        x, y = self.dof_coords[:, 0], self.dof_coords[:, 1]
        out = np.asarray(fn(x, y), dtype=float).copy()
        out[self.dirichlet_mask] = 0.0
        return out


def build_space(mesh: Mesh, p: int) -> FeSpace:
    """Degree-``p`` Lagrange space on ``mesh``; dofs are vertices, then
    edge midpoints in global edge order (``p == 2``)."""
    if p not in (1, 2):
        raise ConfigurationError(f"polynomial degree must be 1 or 2, got {p!r}")
    if p == 1:
        dofs = mesh.triangles.copy()
        coords = mesh.vertices.copy()
        mask = mesh.boundary_vertex_mask.copy()
    else:
        nv = mesh.n_vertices
        dofs = np.hstack([mesh.triangles, nv + mesh.element_edges])
        mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
        coords = np.vstack([mesh.vertices, mid])
        mask = np.concatenate([mesh.boundary_vertex_mask, mesh.edge_counts == 1])
    return FeSpace(mesh, p, dofs, coords, mask)


def _check_elliptic(A: np.ndarray, eps: float) -> None:
    a, b, c, d = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
    if not np.allclose(b, c, rtol=0, atol=1e-14 * (1 + np.abs(b).max(initial=0))):
        raise ConfigurationError("diffusion matrix A is not symmetric")
    lam_min = 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + b * b)
    if not np.all(lam_min >= eps):
        raise ConfigurationError(
            f"diffusion matrix not positive definite: min eigenvalue {lam_min.min():.3e}")


def local_matrices(space: FeSpace, coeffs: CoefficientSet, degree: int | None = None) -> np.ndarray:
    """Element matrices ``K[m, i, j] = a_T(phi_j, phi_i)``, shape (M, nloc, nloc)."""
    degree = 2 * space.p + 2 if degree is None else degree
    bary, w = triangle_rule(degree)
    mesh = space.mesh
    phi, dphi, _ = shape_functions(space.p, bary)  # (nq, nloc), (nq, nloc, 3)
    G = space.grad_lambda  # (M, 3, 2)
    GT = np.swapaxes(G, 1, 2)
    A = coeffs.A.evaluate(mesh, bary)
    _check_elliptic(A, coeffs.ellipticity)
    b = coeffs.b.evaluate(mesh, bary)
    c = coeffs.c.evaluate(mesh, bary)
    has_b, has_c = bool(np.any(b)), bool(np.any(c))
    wq = w[None, :] * mesh.areas[:, None]  # (M, nq)
    nloc = phi.shape[1]
    K = np.zeros((mesh.n_elements, nloc, nloc))
    for q in range(w.size):
        # diffusion in barycentric variables: G A G^T
        C = np.matmul(np.matmul(G, A[:, q]), GT)  # (M, 3, 3)
        K += wq[:, q, None, None] * np.matmul(np.matmul(dphi[q], C), dphi[q].T)
        if has_b:
            bl = np.matmul(G, b[:, q, :, None])[..., 0]  # (M, 3): b . grad lambda_a
            K += wq[:, q, None, None] * phi[q][None, :, None] * (bl @ dphi[q].T)[:, None, :]
        if has_c:
            K += (wq[:, q] * c[:, q])[:, None, None] * np.outer(phi[q], phi[q])[None]
    return K


def assemble_bilinear(space: FeSpace, coeffs: CoefficientSet, degree: int | None = None) -> sp.csr_matrix:
    """Global matrix of ``a`` over all dofs, Dirichlet dofs included."""
    K = local_matrices(space, coeffs, degree)
    dofs = space.element_dofs
    n = space.n_local
    rows = np.repeat(dofs, n, axis=1).ravel()
    cols = np.tile(dofs, (1, n)).ravel()
    mat = sp.coo_matrix((K.ravel(), (rows, cols)), shape=(space.n_dofs,) * 2)
    mat = mat.tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def assemble_load(space: FeSpace, f: Field, fvec: Field, degree: int | None = None) -> np.ndarray:
    """Vector ``r[i] = (f, phi_i) - (fvec, grad phi_i)``."""
    degree = 2 * space.p + 4 if degree is None else degree
    bary, w = triangle_rule(degree)
    mesh = space.mesh
    phi, dphi, _ = shape_functions(space.p, bary)
    nq, nloc = phi.shape
    wq = w[None, :] * mesh.areas[:, None]
    fv = f.evaluate(mesh, bary)
    Fv = fvec.evaluate(mesh, bary)
    local = (wq * fv) @ phi
    if np.any(Fv):
        # fvec . grad lambda_a at every point, weighted
        FG = np.matmul(Fv, np.swapaxes(space.grad_lambda, 1, 2)) * wq[..., None]
        local -= FG.reshape(-1, nq * 3) @ dphi.transpose(0, 2, 1).reshape(nq * 3, nloc)
    return np.bincount(space.element_dofs.ravel(), weights=local.ravel(),
                       minlength=space.n_dofs)


def assemble_primal_rhs(space: FeSpace, loads: LoadSet, degree: int | None = None) -> np.ndarray:
    return assemble_load(space, loads.f, loads.fvec, degree)


def assemble_dual_rhs(space: FeSpace, g: Field, gvec: Field, degree: int | None = None) -> np.ndarray:
    return assemble_load(space, g, gvec, degree)


class DirichletSolver:
    """Sparse LU of the free block of ``matrix``.

    One factorization serves both the primal system and the transposed
    (dual) system.  Solutions are returned on all dofs with zeros on the
    Dirichlet dofs.
    """

    def __init__(self, matrix, mask: np.ndarray, rtol: float = 1e-12):
        matrix = sp.csr_matrix(matrix)
        if matrix.shape[0] != matrix.shape[1] or matrix.shape[0] != mask.size:
            raise SolverError("matrix and Dirichlet mask sizes disagree")
        self.mask = np.asarray(mask, dtype=bool)
        self.free = np.flatnonzero(~self.mask)
        self.rtol = rtol
        self.block = matrix[self.free][:, self.free].tocsc()
        self._lu = None
        self._anorm = None
        if self.free.size:
            try:
                self._lu = spla.splu(self.block)
            except RuntimeError as exc:
                raise SolverError(f"singular free block: {exc}") from exc

    def _solve(self, rhs: np.ndarray, trans: str) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != self.mask.shape:
            raise SolverError("right-hand side has the wrong length")
        out = np.zeros(self.mask.size)
        if not self.free.size:
            return out
        b = rhs[self.free]
        op = self.block if trans == "N" else self.block.T
        x = self._lu.solve(b, trans=trans)
        bnorm = np.abs(b).max()
        for _ in range(3):
            if not np.all(np.isfinite(x)):
                break
            r = b - op @ x
            if self._backward_error(r, x, bnorm, trans) <= self.rtol:
                out[self.free] = x
                return out
            x = x + self._lu.solve(r, trans=trans)
        raise SolverError("linear solve did not reach the residual tolerance")

    def _backward_error(self, r, x, bnorm, trans):
        # normwise: |r| / (|A| |x| + |b|) in the max norm
        if self._anorm is None:
            self._anorm = {
                "N": spla.norm(self.block, np.inf),
                "T": spla.norm(self.block, 1),
            }
        denom = self._anorm[trans] * np.abs(x).max() + bnorm
        return np.abs(r).max() / denom if denom > 0 else 0.0

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self._solve(rhs, "N")

    def solve_transposed(self, rhs: np.ndarray) -> np.ndarray:
        return self._solve(rhs, "T")


def solve_primal(matrix, rhs: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Solve ``matrix u = rhs`` on the free dofs, ``u = 0`` on ``mask``."""
    return DirichletSolver(matrix, mask).solve(rhs)


def solve_dual(matrix, rhs: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Solve the transposed free system ``matrix.T z = rhs``."""
    return DirichletSolver(matrix, mask).solve_transposed(rhs)


def energy_norm_error(space: FeSpace, u_h: np.ndarray, grad_exact, A: Field | None = None,
                      degree: int | None = None) -> float:
    """``(int A grad(u - u_h) . grad(u - u_h))^(1/2)``.

    ``grad_exact(x, y)`` returns the exact gradient with a trailing axis
    of length 2.
    """
    degree = 2 * space.p + 4 if degree is None else degree
    bary, w = triangle_rule(degree)
    mesh = space.mesh
    pts = physical_points(mesh, bary)
    _, g, _ = space.evaluate(u_h, bary)
    e = np.asarray(grad_exact(pts[..., 0], pts[..., 1]), dtype=float) - g
    if A is None:
        dens = np.einsum("mqd,mqd->mq", e, e)
    else:
        dens = (np.matmul(A.evaluate(mesh, bary), e[..., None])[..., 0] * e).sum(axis=-1)
    val = mesh.areas @ (dens @ w)
    return float(np.sqrt(max(val, 0.0)))


def locate_points(mesh: Mesh, pts: np.ndarray, tol: float = 1e-12):
    """Containing element and barycentric coordinates of each point.

    Brute force over all elements; intended for moderate sizes.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    G = grad_barycentric(mesh)
    p0 = mesh.coords[:, 0]
    elem = np.full(pts.shape[0], -1, dtype=np.int64)
    bary = np.zeros((pts.shape[0], 3))
    chunk = max(1, 2_000_000 // mesh.n_elements)
    for start in range(0, pts.shape[0], chunk):
        q = pts[start:start + chunk]
        d = q[:, None, :] - p0[None, :, :]  # (n, M, 2)
        l1 = np.einsum("nmd,md->nm", d, G[:, 1])
        l2 = np.einsum("nmd,md->nm", d, G[:, 2])
        l0 = 1.0 - l1 - l2
        ok = (l0 >= -tol) & (l1 >= -tol) & (l2 >= -tol)
        if not ok.any(axis=1).all():
            raise ValueError("point outside the mesh")
        k = ok.argmax(axis=1)
        rows = np.arange(q.shape[0])
        elem[start:start + chunk] = k
        bary[start:start + chunk] = np.column_stack([l0[rows, k], l1[rows, k], l2[rows, k]])
    return elem, bary


def evaluate_at_points(space: FeSpace, w: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Point values of the discrete function ``w``."""
    elem, bary = locate_points(space.mesh, pts)
    phi, _, _ = shape_functions(space.p, bary)
    return np.einsum("ni,ni->n", phi, np.asarray(w)[space.element_dofs[elem]])


def prolong(coarse: FeSpace, fine: FeSpace, w: np.ndarray) -> np.ndarray:
    """Represent a coarse discrete function in a nested finer space."""
    return evaluate_at_points(coarse, w, fine.dof_coords)
