"""Coefficient and load fields evaluated element by element.

A field is anything with ``evaluate(mesh, bary)`` returning values at the
physical images of barycentric points ``bary`` on every element.  ``bary``
is either shared, shape ``(nq, 3)``, or per element, shape ``(M, nq, 3)``;
the result has shape ``(M, nq) + field.shape``.

Evaluation always happens on behalf of one element, so fields that are
discontinuous across element edges (resolved by the initial mesh) pick
their branch from the owning element's centroid.  This gives one-sided
traces on edges for free.
"""
from __future__ import annotations

from typing import Callable

import numpy as np


def physical_points(mesh, bary: np.ndarray) -> np.ndarray:
    """Map barycentric points to physical coordinates, shape (M, nq, 2)."""
    return np.matmul(bary, mesh.coords)


class Field:
    """Base class; subclasses implement :meth:`evaluate`.

    Vector fields may also implement :meth:`divergence`; the default
    returns zero, which is correct for fields constant on every element.
    For the ``(2, 2)`` matrix field ``A`` the divergence is the vector
    ``d_j = sum_i d A_ij / d x_i``.
    """

    shape: tuple = ()

    def evaluate(self, mesh, bary: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def divergence(self, mesh, bary: np.ndarray) -> np.ndarray:
        nq = bary.shape[-2]
        return np.zeros((mesh.n_elements, nq) + self.shape[1:])

    def __neg__(self) -> "Field":
        return LinearCombination([(-1.0, self)])

    def __add__(self, other: "Field") -> "Field":
        return LinearCombination([(1.0, self), (1.0, other)])

    def __sub__(self, other: "Field") -> "Field":
        return LinearCombination([(1.0, self), (-1.0, other)])


class AnalyticField(Field):
    """Closed-form field ``fn(x, y)``.

    Parameters
    ----------
    fn : callable
        Takes coordinate arrays ``x, y`` of shape ``(M, nq)`` and returns
        an array of shape ``(M, nq) + shape`` (or something broadcastable).
    shape : tuple
        Value shape: ``()`` scalar, ``(2,)`` vector, ``(2, 2)`` matrix.
    div : callable, optional
        Divergence in closed form, same calling convention.
    """

    def __init__(self, fn: Callable, shape: tuple = (), div: Callable | None = None):
        self.fn = fn
        self.shape = tuple(shape)
        self.div = div

    def evaluate(self, mesh, bary):
        pts = physical_points(mesh, bary)
        out = np.asarray(self.fn(pts[..., 0], pts[..., 1]), dtype=float)
        return np.broadcast_to(out, pts.shape[:2] + self.shape).copy()

    def divergence(self, mesh, bary):
        if self.div is None:
            return super().divergence(mesh, bary)
        pts = physical_points(mesh, bary)
        out = np.asarray(self.div(pts[..., 0], pts[..., 1]), dtype=float)
        return np.broadcast_to(out, pts.shape[:2] + self.shape[1:]).copy()


def constant(value) -> AnalyticField:
    value = np.asarray(value, dtype=float)
    return AnalyticField(lambda x, y: np.broadcast_to(value, x.shape + value.shape),
                         value.shape)


class PiecewiseField(Field):
    """``inside`` on elements whose centroid satisfies ``region``,
    ``outside`` elsewhere.

    ``region(x, y)`` returns a boolean array.  The field is only
    meaningful on meshes that resolve the region boundary; see
    :meth:`resolved_by`.
    """

    def __init__(self, region: Callable, inside: Field, outside: Field):
        if inside.shape != outside.shape:
            raise ValueError("inside and outside fields differ in shape")
        self.region = region
        self.inside = inside
        self.outside = outside
        self.shape = inside.shape

    def _select(self, mesh):
        c = mesh.centroids
        return np.asarray(self.region(c[:, 0], c[:, 1]), dtype=bool)

    def _blend(self, mesh, a, b):
        sel = self._select(mesh).reshape((-1,) + (1,) * (a.ndim - 1))
        return np.where(sel, a, b)

    def evaluate(self, mesh, bary):
        return self._blend(mesh, self.inside.evaluate(mesh, bary),
                           self.outside.evaluate(mesh, bary))

    def divergence(self, mesh, bary):
        return self._blend(mesh, self.inside.divergence(mesh, bary),
                           self.outside.divergence(mesh, bary))

    def resolved_by(self, mesh, samples: int = 4) -> bool:
        """True if no element straddles the region boundary.

        Checks region membership at interior sample points of every
        element against the centroid classification.
        """
        s = np.linspace(0.05, 0.95, samples)
        a, b = np.meshgrid(s, s, indexing="ij")
        keep = a + b < 1.0
        l1, l2 = a[keep], b[keep]
        bary = np.column_stack([1 - l1 - l2, l1, l2])
        # shrink towards the centroid so points stay strictly interior
        bary = 0.9 * bary + 0.1 / 3.0
        pts = physical_points(mesh, bary)
        inside = np.asarray(self.region(pts[..., 0], pts[..., 1]), dtype=bool)
        return bool(np.all(inside == self._select(mesh)[:, None]))


class LinearCombination(Field):
    def __init__(self, terms):
        self.terms = list(terms)
        self.shape = self.terms[0][1].shape

    def evaluate(self, mesh, bary):
        return sum(c * f.evaluate(mesh, bary) for c, f in self.terms)

    def divergence(self, mesh, bary):
        return sum(c * f.divergence(mesh, bary) for c, f in self.terms)
