"""Conforming triangulations of the unit square and newest vertex bisection.

Every triangle is stored as three vertex indices ``(a, b, c)`` in
counterclockwise order.  The refinement edge is ``a-b``; ``c`` is the
newest vertex.  Local edge ``k`` of a triangle joins local vertices
``k`` and ``k+1 (mod 3)``, so local edge 0 is always the refinement edge.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

# local edge k joins local vertices _EDGE_VERTS[k]
_EDGE_VERTS = np.array([[0, 1], [1, 2], [2, 0]])


class MeshError(ValueError):
    """Raised for invalid meshes or invalid refinement requests."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable conforming triangulation.

    Attributes
    ----------
    vertices : (N, 2) float array
    triangles : (M, 3) int array, counterclockwise, refinement edge first
    generation : (M,) int array, number of bisections since the initial mesh
    """

    vertices: np.ndarray
    triangles: np.ndarray
    generation: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        g = np.ascontiguousarray(self.generation, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 2 or not np.all(np.isfinite(v)):
            raise MeshError("vertices must be a finite (N, 2) array")
        if t.ndim != 2 or t.shape[1] != 3 or g.shape != (t.shape[0],):
            raise MeshError("triangles must be (M, 3) with one generation each")
        if t.size and (t.min() < 0 or t.max() >= v.shape[0]):
            raise MeshError("triangle references a missing vertex")
        for arr in (v, t, g):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "generation", g)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_elements(self) -> int:
        return self.triangles.shape[0]

    def __len__(self) -> int:
        return self.n_elements

    @cached_property
    def coords(self) -> np.ndarray:
        """Vertex coordinates per element, shape (M, 3, 2)."""
        return self.vertices[self.triangles]

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.coords
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.coords.mean(axis=1)

    @cached_property
    def _edge_data(self):
        local = self.triangles[:, _EDGE_VERTS]  # (M, 3, 2)
        flat = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(flat, axis=0, return_inverse=True)
        el2ed = inverse.reshape(-1, 3)
        counts = np.bincount(inverse.ravel(), minlength=edges.shape[0])
        # first/second owner of each edge, -1 if none
        owners = np.full((edges.shape[0], 2), -1, dtype=np.int64)
        order = np.argsort(inverse.ravel(), kind="stable")
        sorted_edges = inverse.ravel()[order]
        first = np.ones(order.size, dtype=bool)
        first[1:] = sorted_edges[1:] != sorted_edges[:-1]
        owners[sorted_edges[first], 0] = order[first] // 3
        owners[sorted_edges[~first], 1] = order[~first] // 3
        for arr in (edges, el2ed, counts, owners):
            arr.setflags(write=False)
        return edges, el2ed, counts, owners

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs, shape (E, 2)."""
        return self._edge_data[0]

    @property
    def element_edges(self) -> np.ndarray:
        """Global edge index of each local edge, shape (M, 3)."""
        return self._edge_data[1]

    @property
    def edge_counts(self) -> np.ndarray:
        return self._edge_data[2]

    @property
    def edge_elements(self) -> np.ndarray:
        """The (up to) two elements sharing each edge, -1 padded."""
        return self._edge_data[3]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        """Edges owned by a single element, as sorted vertex pairs."""
        return self.edges[self.edge_counts == 1]

    @cached_property
    def boundary_vertex_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_edges.ravel()] = True
        return mask

    @cached_property
    def diameters(self) -> np.ndarray:
        p = self.coords
        lengths = np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2)
        return lengths.max(axis=1)

    def min_angle(self) -> float:
        """Smallest interior angle (radians) over all elements."""
        p = self.coords
        e = p[:, [1, 2, 0]] - p  # e[k] = edge from vertex k to k+1
        a = np.linalg.norm(e, axis=2)
        angles = []
        for k in range(3):
            u = e[:, k]
            w = -e[:, (k - 1) % 3]
            cos = np.einsum("ij,ij->i", u, w) / (a[:, k] * a[:, (k - 1) % 3])
            angles.append(np.arccos(np.clip(cos, -1.0, 1.0)))
        return float(np.min(angles))

    def check(self, tol: float = 1e-12) -> None:
        """Raise :class:`MeshError` unless the mesh is a conforming
        triangulation of the unit square."""
        if np.any(self.signed_areas <= 0):
            raise MeshError("non-positive signed area")
        if np.any(self.edge_counts > 2):
            raise MeshError("edge shared by more than two triangles")
        b = self.vertices[self.boundary_edges]
        on_side = np.zeros(b.shape[0], dtype=bool)
        for axis in (0, 1):
            for val in (0.0, 1.0):
                on_side |= np.all(np.abs(b[:, :, axis] - val) <= tol, axis=1)
        if not np.all(on_side):
            raise MeshError("hanging node or interior edge owned by one triangle")
        if abs(self.areas.sum() - 1.0) > tol:
            raise MeshError("triangles do not cover the unit square")

    def is_conforming(self) -> bool:
        try:
            self.check()
        except MeshError:
            return False
        return True


def initial_mesh(n: int = 8) -> Mesh:
    """Structured ``n x n`` grid on the unit square.

    Each square cell is cut by its diagonal of direction (1, 1), so all
    lines ``x = k/n``, ``y = k/n`` and ``x - y = k/n`` are resolved.  The
    hypotenuse of every triangle is its refinement edge.
    """
    if int(n) != n or n < 1:
        raise MeshError(f"grid size must be a positive integer, got {n!r}")
    n = int(n)
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = i.ravel(), j.ravel()
    sw, se, ne, nw = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
    lower = np.column_stack([ne, sw, se])
    upper = np.column_stack([sw, ne, nw])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return Mesh(vertices, triangles, np.zeros(2 * n * n, dtype=np.int64))


def _close_marking(mesh: Mesh, edge_marked: np.ndarray) -> np.ndarray:
    el2ed = mesh.element_edges
    while True:
        m = edge_marked[el2ed]
        swap = ~m[:, 0] & (m[:, 1] | m[:, 2])
        if not swap.any():
            return edge_marked
        edge_marked[el2ed[swap, 0]] = True


def _bisect(mesh: Mesh, edge_marked: np.ndarray) -> Mesh:
    """Refine all elements according to a closed set of marked edges."""
    if not edge_marked.any():
        return mesh
    edges = mesh.edges
    n_new = int(edge_marked.sum())
    new_id = np.full(mesh.n_edges, -1, dtype=np.int64)
    new_id[edge_marked] = mesh.n_vertices + np.arange(n_new)
    midpoints = 0.5 * (mesh.vertices[edges[edge_marked, 0]]
                       + mesh.vertices[edges[edge_marked, 1]])
    vertices = np.vstack([mesh.vertices, midpoints])

    tri = mesh.triangles
    gen = mesh.generation
    mid = new_id[mesh.element_edges]  # (M, 3)
    m = mid >= 0
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    m1, m2, m3 = mid[:, 0], mid[:, 1], mid[:, 2]

    patterns = {
        "1": m[:, 0] & ~m[:, 1] & ~m[:, 2],
        "12": m[:, 0] & m[:, 1] & ~m[:, 2],
        "13": m[:, 0] & ~m[:, 1] & m[:, 2],
        "123": m[:, 0] & m[:, 1] & m[:, 2],
    }

    def kids(pattern):
        # children in order, each (triangle columns, generation increment)
        if pattern == "1":
            return [((c, a, m1), 1), ((b, c, m1), 1)]
        if pattern == "12":
            return [((c, a, m1), 1), ((m1, b, m2), 2), ((c, m1, m2), 2)]
        if pattern == "13":
            return [((m1, c, m3), 2), ((a, m1, m3), 2), ((b, c, m1), 1)]
        return [((m1, c, m3), 2), ((a, m1, m3), 2),
                ((m1, b, m2), 2), ((c, m1, m2), 2)]

    new_tri = tri.copy()
    new_gen = gen.copy()
    extra_parent, extra_rank, extra_tri, extra_gen = [], [], [], []
    for pattern, sel in patterns.items():
        idx = np.flatnonzero(sel)
        if idx.size == 0:
            continue
        for rank, (cols, inc) in enumerate(kids(pattern)):
            block = np.column_stack([col[idx] for col in cols])
            if rank == 0:
                new_tri[idx] = block
                new_gen[idx] = gen[idx] + inc
            else:
                extra_parent.append(idx)
                extra_rank.append(np.full(idx.size, rank))
                extra_tri.append(block)
                extra_gen.append(gen[idx] + inc)
    parent = np.concatenate(extra_parent)
    rank = np.concatenate(extra_rank)
    order = np.lexsort((rank, parent))
    triangles = np.vstack([new_tri, np.vstack(extra_tri)[order]])
    generation = np.concatenate([new_gen, np.concatenate(extra_gen)[order]])
    return Mesh(vertices, triangles, generation)


def refine_nvb(mesh: Mesh, marked) -> Mesh:
    """Coarsest conforming NVB refinement bisecting every marked element.

    Parameters
    ----------
    mesh : Mesh
    marked : iterable of int
        Element indices to bisect (duplicates allowed).
    """
    marked = np.asarray(sorted(set(int(k) for k in marked)), dtype=np.int64)
    if marked.size and (marked[0] < 0 or marked[-1] >= mesh.n_elements):
        raise MeshError("marked element index out of range")
    edge_marked = np.zeros(mesh.n_edges, dtype=bool)
    edge_marked[mesh.element_edges[marked, 0]] = True
    return _bisect(mesh, _close_marking(mesh, edge_marked))


def uniform_refine(mesh: Mesh) -> Mesh:
    """Bisect every element twice (three new edges each), quadrupling
    the element count."""
    return _bisect(mesh, np.ones(mesh.n_edges, dtype=bool))


def element_diameter(mesh: Mesh, t: int) -> float:
    """Longest edge of element ``t``."""
    if not 0 <= t < mesh.n_elements:
        raise MeshError(f"element index {t} out of range")
    return float(mesh.diameters[t])


def write_mesh(mesh: Mesh, path) -> None:
    """Plain-text dump: header, vertex lines, triangle lines."""
    lines = [f"vertices {mesh.n_vertices} triangles {mesh.n_elements}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [f"{a} {b} {c} {g}" for (a, b, c), g
              in zip(mesh.triangles.tolist(), mesh.generation.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    lines = Path(path).read_text().split("\n")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "vertices" or head[2] != "triangles":
        raise MeshError("bad mesh header")
    nv, nt = int(head[1]), int(head[3])
    body = lines[1:1 + nv + nt]
    if len(body) < nv + nt:
        raise MeshError("truncated mesh file")
    vertices = np.array([[float(s) for s in ln.split()] for ln in body[:nv]]).reshape(nv, 2)
    tri = np.array([[int(s) for s in ln.split()] for ln in body[nv:]], dtype=np.int64).reshape(nt, 4)
    return Mesh(vertices, tri[:, :3], tri[:, 3])
