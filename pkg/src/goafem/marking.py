"""Doerfler marking and the four goal-oriented marking strategies.

All strategies select sets of truly minimal cardinality (the greedy
prefix of the descending sort).  Ties are broken by ascending element
index, so results are deterministic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

STRATEGIES = ("A", "B", "BET1", "BET2")


class MarkingError(ValueError):
    pass


@dataclass(frozen=True)
class MarkedSet:
    """Marked element indices (ascending) plus the data used to pick them.

    ``checks`` holds ``(values, subset)`` pairs whose Doerfler inequality
    ``sum(values[subset]) >= theta * sum(values)`` defines the strategy.
    """

    indices: np.ndarray
    strategy: str
    theta: float
    checks: tuple = field(default=(), repr=False, compare=False)

    def __len__(self) -> int:
        return int(self.indices.size)

    def __iter__(self):
        return iter(self.indices.tolist())


def _check_theta(theta: float) -> float:
    theta = float(theta)
    if not 0.0 < theta <= 1.0:
        raise MarkingError(f"theta must lie in (0, 1], got {theta}")
    return theta


def doerfler_inequality(values: np.ndarray, subset, theta: float) -> bool:
    """Exactly rounded check of ``sum(values[subset]) >= theta * sum(values)``."""
    values = np.asarray(values, dtype=float)
    subset = np.asarray(subset, dtype=np.int64)
    return math.fsum(values[subset]) >= theta * math.fsum(values)


def _doerfler_order(values: np.ndarray, theta: float) -> np.ndarray:
    """Minimal greedy prefix, in descending-value order."""
    order = np.lexsort((np.arange(values.size), -values))
    total = math.fsum(values)
    if total == 0.0:
        return order[:0]
    target = theta * total
    csum = np.cumsum(values[order])
    k = int(np.searchsorted(csum, target * (1.0 - 1e-12))) + 1
    k = min(max(k, 1), values.size)
    # settle rounding with exact sums
    while k < values.size and math.fsum(values[order[:k]]) < target:
        k += 1
    while k > 1 and math.fsum(values[order[:k - 1]]) >= target:
        k -= 1
    return order[:k]


def doerfler_min(indicators_sq, theta: float) -> MarkedSet:
    """Smallest set ``M`` with ``sum_M ind^2 >= theta * sum ind^2``.

    Returns the empty set if all indicators vanish.
    """
    theta = _check_theta(theta)
    values = np.asarray(indicators_sq, dtype=float)
    if values.ndim != 1 or np.any(values < 0) or not np.all(np.isfinite(values)):
        raise MarkingError("indicators must be a finite nonnegative vector")
    sel = _doerfler_order(values, theta)
    return MarkedSet(np.sort(sel), "doerfler", theta, ((values, sel),))


def _pair(eta_sq, zeta_sq):
    eta_sq = np.asarray(eta_sq, dtype=float)
    zeta_sq = np.asarray(zeta_sq, dtype=float)
    if eta_sq.shape != zeta_sq.shape or eta_sq.ndim != 1:
        raise MarkingError("eta and zeta indicators must be vectors of equal length")
    return eta_sq, zeta_sq


def strategy_A(eta_sq, zeta_sq, theta: float) -> MarkedSet:
    """Union of equally sized leading parts of the primal and the combined
    Doerfler sets."""
    theta = _check_theta(theta)
    eta_sq, zeta_sq = _pair(eta_sq, zeta_sq)
    combined = eta_sq + zeta_sq
    bar_u = _doerfler_order(eta_sq, theta)
    bar_uz = _doerfler_order(combined, theta)
    m = min(bar_u.size, bar_uz.size)
    marked = np.union1d(bar_u[:m], bar_uz[:m])
    return MarkedSet(marked, "A", theta, ((eta_sq, bar_u), (combined, bar_uz)))


def strategy_B(eta_sq, zeta_sq, theta: float) -> MarkedSet:
    """Doerfler marking of the combined estimator ``eta^2 + zeta^2``."""
    theta = _check_theta(theta)
    eta_sq, zeta_sq = _pair(eta_sq, zeta_sq)
    combined = eta_sq + zeta_sq
    sel = _doerfler_order(combined, theta)
    return MarkedSet(np.sort(sel), "B", theta, ((combined, sel),))


def _pow2_rescale(*arrays):
    """Multiply by the power of two bringing the largest entry into
    [0.5, 1).  Exact, so the results order and sum like the originals."""
    top = max(float(a.max(initial=0.0)) for a in arrays)
    shift = 0 if top == 0.0 else -math.frexp(top)[1]
    return tuple(np.ldexp(a, shift) for a in arrays)


def bet1_weights(eta_sq, zeta_sq) -> np.ndarray:
    """``eta(T)^2 zeta^2 + eta^2 zeta(T)^2``, up to a positive factor.

    Both fields are rescaled separately first; the weights then scale by
    a constant, which leaves the Doerfler set unchanged but keeps the
    products clear of underflow.
    """
    eta_sq, zeta_sq = _pair(eta_sq, zeta_sq)
    (eta_sq,), (zeta_sq,) = _pow2_rescale(eta_sq), _pow2_rescale(zeta_sq)
    return eta_sq * zeta_sq.sum() + eta_sq.sum() * zeta_sq


def bet2_weights(eta_sq, zeta_sq) -> np.ndarray:
    """``eta(T)^2 (eta^2 + zeta^2) + eta^2 (eta(T)^2 + zeta(T)^2)``, up to a
    positive factor (common rescaling as in :func:`bet1_weights`)."""
    eta_sq, zeta_sq = _pair(eta_sq, zeta_sq)
    eta_sq, zeta_sq = _pow2_rescale(eta_sq, zeta_sq)
    eta2, zeta2 = eta_sq.sum(), zeta_sq.sum()
    return eta_sq * (eta2 + zeta2) + eta2 * (eta_sq + zeta_sq)


def strategy_BET1(eta_sq, zeta_sq, theta: float) -> MarkedSet:
    theta = _check_theta(theta)
    rho = bet1_weights(eta_sq, zeta_sq)
    sel = _doerfler_order(rho, theta)
    return MarkedSet(np.sort(sel), "BET1", theta, ((rho, sel),))


def strategy_BET2(eta_sq, zeta_sq, theta: float) -> MarkedSet:
    theta = _check_theta(theta)
    rho = bet2_weights(eta_sq, zeta_sq)
    sel = _doerfler_order(rho, theta)
    return MarkedSet(np.sort(sel), "BET2", theta, ((rho, sel),))


MARKERS = {
    "A": strategy_A,
    "B": strategy_B,
    "BET1": strategy_BET1,
    "BET2": strategy_BET2,
}


def mark(strategy: str, eta_sq, zeta_sq, theta: float) -> MarkedSet:
    try:
        return MARKERS[strategy](eta_sq, zeta_sq, theta)
    except KeyError:
        raise MarkingError(f"unknown strategy {strategy!r}") from None


def verify(marked: MarkedSet) -> bool:
    """Re-check every defining Doerfler inequality of ``marked``."""
    return all(doerfler_inequality(v, s, marked.theta) for v, s in marked.checks)
