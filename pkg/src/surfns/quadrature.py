"""Symmetric quadrature rules on the reference triangle and tetrahedron.

Points are stored in barycentric coordinates, weights are normalized so they
sum to the measure of the reference cell (1/2 for the triangle, 1/6 for the
tetrahedron).  Mapping to a physical cell multiplies by |det J|.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (n, d+1) barycentric
    weights: np.ndarray  # (n,)
    exactness_degree: int

    @property
    def size(self) -> int:
        return len(self.weights)

    def reference_coords(self) -> np.ndarray:
        """Cartesian coordinates on the reference simplex (drop the first barycentric)."""
        return self.points[:, 1:]


def _orbit(bary) -> list[tuple[float, ...]]:
    return sorted(set(permutations(bary)))


def _build(orbits, measure: float, degree: int) -> QuadratureRule:
    pts, wts = [], []
    for bary, w in orbits:
        for p in _orbit(bary):
            pts.append(p)
            wts.append(w)
    pts = np.array(pts, dtype=float)
    wts = np.array(wts, dtype=float)
    wts *= measure / wts.sum()
    return QuadratureRule(pts, wts, degree)


# Dunavant rules, weights relative to unit area
_TRI_TABLE = {
    1: [((1 / 3, 1 / 3, 1 / 3), 1.0)],
    2: [((2 / 3, 1 / 6, 1 / 6), 1 / 3)],
    4: [
        ((0.108103018168070, 0.445948490915965, 0.445948490915965), 0.223381589678011),
        ((0.816847572980459, 0.091576213509771, 0.091576213509771), 0.109951743655322),
    ],
    5: [
        ((1 / 3, 1 / 3, 1 / 3), 0.225),
        ((0.059715871789770, 0.470142064105115, 0.470142064105115), 0.132394152788506),
        ((0.797426985353087, 0.101286507323456, 0.101286507323456), 0.125939180544827),
    ],
    6: [
        ((0.501426509658179, 0.249286745170910, 0.249286745170910), 0.116786275726379),
        ((0.873821971016996, 0.063089014491502, 0.063089014491502), 0.050844906370207),
        ((0.053145049844817, 0.310352451033784, 0.636502499121399), 0.082851075618374),
    ],
}

# Keast/Walkington positive rules, weights relative to unit volume
_a5, _b5 = 0.31088591926330060980, 0.092735250310891226402
_c5 = 0.045503704125649649492
_TET_TABLE = {
    1: [((0.25, 0.25, 0.25, 0.25), 1.0)],
    2: [((0.5854101966249685, 0.1381966011250105, 0.1381966011250105, 0.1381966011250105), 0.25)],
    5: [
        ((1 - 3 * _a5, _a5, _a5, _a5), 0.11268792571801585080),
        ((1 - 3 * _b5, _b5, _b5, _b5), 0.073493043116361949544),
        ((0.5 - _c5, 0.5 - _c5, _c5, _c5), 0.042546020777081466438),
    ],
}


def _pick(table: dict, degree: int, kind: str) -> int:
    if degree < 1:
        raise ValueError(f"{kind} quadrature degree must be >= 1, got {degree}")
    for d in sorted(table):
        if d >= degree:
            return d
    raise ValueError(f"unsupported {kind} quadrature degree {degree} (max {max(table)})")


def triangle_rule(degree: int) -> QuadratureRule:
    d = _pick(_TRI_TABLE, degree, "triangle")
    return _build(_TRI_TABLE[d], 0.5, d)


def tetrahedron_rule(degree: int) -> QuadratureRule:
    d = _pick(_TET_TABLE, degree, "tetrahedron")
    return _build(_TET_TABLE[d], 1.0 / 6.0, d)


def monomial_exponents(dim: int, degree: int) -> list[tuple[int, ...]]:
    """All exponent tuples of total degree <= ``degree`` in ``dim`` variables."""
    if dim == 0:
        return [()]
    out = []
    for k in range(degree + 1):
        for rest in monomial_exponents(dim - 1, degree - k):
            out.append((k, *rest))
    return out


def reference_monomial_integral(exponents: tuple[int, ...]) -> float:
    """Exact integral of prod x_i^a_i over the reference simplex of dimension len(exponents).

    Dirichlet formula: prod(a_i!) / (d + sum a_i)!.
    """
    from math import factorial

    num = 1
    for a in exponents:
        num *= factorial(a)
    return num / factorial(len(exponents) + sum(exponents))
