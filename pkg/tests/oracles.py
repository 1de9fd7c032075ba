"""Independent reference computations used by the tests.

Nothing here calls into the package's quadrature or basis code: shape
functions come from a monomial Vandermonde system on the physical
triangle and integrals from a collapsed Gauss-Legendre rule.
"""
import numpy as np


def duffy_rule(tri: np.ndarray, n: int = 10):
    """Gauss points and weights on the physical triangle ``tri`` (3, 2)."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    s = u.ravel()
    t = (v * (1.0 - u)).ravel()
    wt = (wu * wv * (1.0 - u)).ravel()
    p0, p1, p2 = tri
    pts = p0 + np.outer(s, p1 - p0) + np.outer(t, p2 - p0)
    d1, d2 = p1 - p0, p2 - p0
    jac = abs(d1[0] * d2[1] - d1[1] * d2[0])
    return pts, wt * jac


def duffy_edge(a: np.ndarray, b: np.ndarray, n: int = 10):
    x, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (x + 1.0)
    pts = a + np.outer(s, b - a)
    return pts, 0.5 * w * np.linalg.norm(b - a)


MONOMIALS = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def lagrange_nodes(tri: np.ndarray, p: int) -> np.ndarray:
    if p == 1:
        return tri.copy()
    mids = 0.5 * (tri + tri[[1, 2, 0]])
    return np.vstack([tri, mids])


class MonomialBasis:
    """Lagrange basis of degree ``p`` on one triangle, in monomial form."""

    def __init__(self, tri, p):
        self.p = p
        self.exps = MONOMIALS[:3] if p == 1 else MONOMIALS
        nodes = lagrange_nodes(np.asarray(tri, float), p)
        V = np.array([[x ** a * y ** b for a, b in self.exps] for x, y in nodes])
        self.C = np.linalg.inv(V)  # column i: coefficients of phi_i

    def _mono(self, pts):
        x, y = pts[:, 0], pts[:, 1]
        val = np.stack([x ** a * y ** b for a, b in self.exps], axis=1)
        dx = np.stack([a * x ** max(a - 1, 0) * y ** b for a, b in self.exps], axis=1)
        dy = np.stack([b * x ** a * y ** max(b - 1, 0) for a, b in self.exps], axis=1)
        dxx = np.stack([a * (a - 1) * x ** max(a - 2, 0) * y ** b for a, b in self.exps], axis=1)
        dxy = np.stack([a * b * x ** max(a - 1, 0) * y ** max(b - 1, 0) for a, b in self.exps],
                       axis=1)
        dyy = np.stack([b * (b - 1) * x ** a * y ** max(b - 2, 0) for a, b in self.exps], axis=1)
        return val, dx, dy, dxx, dxy, dyy

    def values(self, pts):
        """Values (q, i), gradients (q, i, 2) and Hessians (q, i, 2, 2)."""
        val, dx, dy, dxx, dxy, dyy = (m @ self.C for m in self._mono(pts))
        hess = np.stack([np.stack([dxx, dxy], -1), np.stack([dxy, dyy], -1)], -2)
        return val, np.stack([dx, dy], axis=-1), hess


def local_matrix(tri, p, A, b, c, n=10):
    """``K[i, j] = int A grad phi_j . grad phi_i + (b . grad phi_j) phi_i + c phi_j phi_i``."""
    basis = MonomialBasis(tri, p)
    pts, w = duffy_rule(np.asarray(tri, float), n)
    phi, grad, _ = basis.values(pts)
    K = np.einsum("q,qjd,de,qie->ij", w, grad, A, grad)
    K += np.einsum("q,qjd,d,qi->ij", w, grad, b, phi)
    K += c * np.einsum("q,qj,qi->ij", w, phi, phi)
    return K


def residual_indicators(mesh, p, v, A, b, c, f, fvec, div_fvec, n=10):
    """Squared residual indicators by brute force.

    ``A`` is a constant matrix; ``b, c, f, fvec, div_fvec`` are callables
    of ``(x, y)``.  Edge jumps are built edge by edge from the two
    one-sided fluxes.
    """
    tri = mesh.triangles
    coords = mesh.vertices
    nodes = {}
    for t in range(len(tri)):
        for k in range(3):
            nodes.setdefault(tuple(sorted((tri[t, k], tri[t, (k + 1) % 3]))), []).append(t)
    # dof layout of the package under test: vertices, then edges in sorted order
    edge_index = {e: i for i, e in enumerate(sorted(nodes))}
    nv = len(coords)

    def local_dofs(t):
        d = list(tri[t])
        if p == 2:
            d += [nv + edge_index[tuple(sorted((tri[t, k], tri[t, (k + 1) % 3])))]
                  for k in range(3)]
        return np.array(d)

    bases = [MonomialBasis(coords[tri[t]], p) for t in range(len(tri))]
    out = np.zeros(len(tri))
    h = np.array([max(np.linalg.norm(coords[tri[t, k]] - coords[tri[t, (k + 1) % 3]])
                      for k in range(3)) for t in range(len(tri))])
    for t in range(len(tri)):
        pts, w = duffy_rule(coords[tri[t]], n)
        phi, grad, hess = bases[t].values(pts)
        vl = v[local_dofs(t)]
        val, gv, hv = phi @ vl, np.einsum("qid,i->qd", grad, vl), np.einsum("qide,i->qde", hess, vl)
        x, y = pts.T
        res = (-np.einsum("de,qde->q", A, hv) - div_fvec(x, y)
               + np.einsum("qd,qd->q", b(x, y), gv) + c(x, y) * val - f(x, y))
        out[t] += h[t] ** 2 * (w @ res ** 2)
    for (i, j), owners in nodes.items():
        if len(owners) != 2:
            continue
        pts, w = duffy_edge(coords[i], coords[j], n)
        tangent = (coords[j] - coords[i]) / np.linalg.norm(coords[j] - coords[i])
        jump = np.zeros(len(w))
        for t in owners:
            c0 = coords[tri[t]].mean(axis=0)
            normal = np.array([tangent[1], -tangent[0]])
            if normal @ (coords[i] - c0) < 0:
                normal = -normal
            _, grad, _ = bases[t].values(pts)
            gv = np.einsum("qid,i->qd", grad, v[local_dofs(t)])
            flux = gv @ A.T + fvec(pts[:, 0], pts[:, 1])
            jump += flux @ normal
        for t in owners:
            out[t] += h[t] * (w @ jump ** 2)
    return out
