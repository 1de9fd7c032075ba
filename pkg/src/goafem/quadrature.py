"""Quadrature rules on the reference triangle and on edges.

Triangle rules are returned in barycentric coordinates with weights that
sum to one, so an integral over a physical triangle ``T`` is
``|T| * sum(w * f(points))``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np


def radon7() -> tuple[np.ndarray, np.ndarray]:
    """Seven-point rule of degree five."""
    s15 = np.sqrt(15.0)
    a = (6.0 - s15) / 21.0
    b = (6.0 + s15) / 21.0
    wa = (155.0 - s15) / 1200.0
    wb = (155.0 + s15) / 1200.0
    bary = np.array([
        [1 / 3, 1 / 3, 1 / 3],
        [a, a, 1 - 2 * a], [a, 1 - 2 * a, a], [1 - 2 * a, a, a],
        [b, b, 1 - 2 * b], [b, 1 - 2 * b, b], [1 - 2 * b, b, b],
    ])
    weights = np.array([9 / 40, wa, wa, wa, wb, wb, wb])
    return bary, weights


@lru_cache(maxsize=None)
def _conical(degree: int) -> tuple[np.ndarray, np.ndarray]:
    # Duffy-collapsed tensor Gauss rule; the Jacobian adds one degree in s
    n = (degree + 2) // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    s, t = np.meshgrid(x, x, indexing="ij")
    ws, wt = np.meshgrid(w, w, indexing="ij")
    l1 = s.ravel()
    l2 = ((1.0 - s) * t).ravel()
    weights = (ws * wt * (1.0 - s)).ravel() * 2.0
    bary = np.column_stack([1.0 - l1 - l2, l1, l2])
    return bary, weights


def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points and unit-sum weights exact for polynomials of
    total degree ``degree``.

    Degree <= 5 uses the 7-point rule; higher degrees use a collapsed
    Gauss product rule.
    """
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if degree <= 5:
        return radon7()
    bary, weights = _conical(int(degree))
    return bary.copy(), weights.copy()


def line_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points on [0, 1] with unit-sum weights."""
    n = max(1, (degree + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w
