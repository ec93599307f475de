"""Lagrange elements on the Kuhn mesh and band-restricted Taylor-Hood spaces.

Global Lagrange nodes of degree k are points of the k-times refined vertex
lattice, so node ids are lattice indices and are shared between neighboring
tets without any face/edge bookkeeping.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np

from .mesh import BackgroundMesh
from .quadrature import monomial_exponents


class InactiveElementError(KeyError):
    pass


def _multi_indices(k: int) -> np.ndarray:
    """Barycentric multi-indices of degree k, vertices first."""
    alphas = [a for a in monomial_exponents(4, k) if sum(a) == k]
    verts = [tuple(k if j == i else 0 for j in range(4)) for i in range(4)]
    rest = sorted(a for a in alphas if a not in verts)
    return np.array(verts + rest, dtype=int)


class LagrangeBasis:
    """Nodal basis of P_k on the reference tetrahedron in coordinates xi = (l1, l2, l3)."""

    def __init__(self, degree: int):
        if degree < 1:
            raise ValueError("degree must be >= 1")
        self.degree = degree
        self.multi_indices = _multi_indices(degree)
        self.nodes = self.multi_indices[:, 1:] / degree
        self.exponents = np.array(monomial_exponents(3, degree), dtype=int)
        vander = self._monomials(self.nodes)
        self.coeffs = np.linalg.inv(vander)  # (n_mono, nb)

    @property
    def size(self) -> int:
        return len(self.multi_indices)

    def _monomials(self, xi: np.ndarray) -> np.ndarray:
        return np.prod(xi[:, None, :] ** self.exponents[None], axis=2)

    def _monomial_gradients(self, xi: np.ndarray) -> np.ndarray:
        out = np.zeros((len(xi), len(self.exponents), 3))
        for r in range(3):
            e = self.exponents.copy()
            fac = e[:, r].astype(float)
            e[:, r] = np.maximum(e[:, r] - 1, 0)
            out[:, :, r] = fac * np.prod(xi[:, None, :] ** e[None], axis=2)
        return out

    def values(self, xi: np.ndarray) -> np.ndarray:
        return self._monomials(np.atleast_2d(xi)) @ self.coeffs

    def reference_gradients(self, xi: np.ndarray) -> np.ndarray:
        g = self._monomial_gradients(np.atleast_2d(xi))
        return np.einsum("nmr,mb->nbr", g, self.coeffs)


@lru_cache(maxsize=None)
def lagrange_basis(degree: int) -> LagrangeBasis:
    return LagrangeBasis(degree)


def physical_gradients(ref_grads: np.ndarray, jinv: np.ndarray) -> np.ndarray:
    """Map reference gradients (..., nb, 3) with per-point inverse Jacobians (..., 3, 3)."""
    return np.einsum("...br,...rx->...bx", ref_grads, jinv)


def element_nodes(mesh: BackgroundMesh, degree: int) -> np.ndarray:
    """(nt, nb) global node ids of the degree-k Lagrange nodes of every tet."""
    key = ("element_nodes", degree)
    if key not in mesh.cache:
        alpha = lagrange_basis(degree).multi_indices
        lat = mesh.vertex_lattice[mesh.tets]  # (nt, 4, 3)
        coords = np.einsum("bi,tix->tbx", alpha, lat)
        shape = tuple(degree * c + 1 for c in mesh.cells)
        mesh.cache[key] = np.ravel_multi_index(coords.reshape(-1, 3).T, shape).reshape(len(lat), -1)
    return mesh.cache[key]


def node_count(mesh: BackgroundMesh, degree: int) -> int:
    """Size of the global lattice id range for degree k."""
    return int(np.prod([degree * c + 1 for c in mesh.cells]))


def node_coordinates(mesh: BackgroundMesh, degree: int, ids: np.ndarray) -> np.ndarray:
    shape = tuple(degree * c + 1 for c in mesh.cells)
    lat = np.stack(np.unravel_index(np.asarray(ids), shape), axis=-1)
    return np.asarray(mesh.domain.lo) + lat * (mesh.spacing / degree)


def barycentric(mesh: BackgroundMesh, tets: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Reference coordinates xi of physical points in the given tets."""
    v0 = mesh.vertices[mesh.tets[tets, 0]]
    return np.einsum("...ij,...j->...i", mesh.inverse_jacobians[tets], points - v0)


@dataclass(frozen=True, eq=False)
class ScalarDofMap:
    """Degree-k scalar Lagrange space restricted to a set of tets."""

    mesh: BackgroundMesh
    degree: int
    elements: np.ndarray  # sorted active tet ids
    nodes: np.ndarray  # sorted global node ids
    local: np.ndarray  # (n_el, nb) indices into ``nodes``

    @property
    def size(self) -> int:
        return len(self.nodes)

    def element_rows(self, tets: np.ndarray) -> np.ndarray:
        """Row of each tet in ``elements``; raises for inactive tets."""
        tets = np.asarray(tets)
        pos = np.searchsorted(self.elements, tets)
        pos = np.minimum(pos, len(self.elements) - 1)
        if len(tets) and not np.array_equal(self.elements[pos], tets):
            raise InactiveElementError("element not active in this space")
        return pos

    def coordinates(self) -> np.ndarray:
        return node_coordinates(self.mesh, self.degree, self.nodes)


def scalar_dofmap(mesh: BackgroundMesh, degree: int, elements) -> ScalarDofMap:
    elements = np.unique(np.asarray(elements, dtype=np.int64))
    if elements.size == 0:
        raise ValueError("empty element set")
    enodes = element_nodes(mesh, degree)[elements]
    nodes, inv = np.unique(enodes, return_inverse=True)
    return ScalarDofMap(mesh, degree, elements, nodes, inv.reshape(enodes.shape))


@dataclass(frozen=True, eq=False)
class BandDofMap:
    """Taylor-Hood P_{m+1}^3 / P_m pair on (band, cut) element sets.

    Velocity dof of (node j, component c) is 3*j + c.
    """

    m: int
    velocity: ScalarDofMap
    pressure: ScalarDofMap

    @property
    def n_velocity(self) -> int:
        return 3 * self.velocity.size

    @property
    def n_pressure(self) -> int:
        return self.pressure.size

    def velocity_element_dofs(self, tets) -> np.ndarray:
        """(n, 3*nb) velocity dofs, ordered (local node, component)."""
        loc = self.velocity.local[self.velocity.element_rows(tets)]
        return (3 * loc[:, :, None] + np.arange(3)).reshape(len(loc), -1)

    def pressure_element_dofs(self, tets) -> np.ndarray:
        return self.pressure.local[self.pressure.element_rows(tets)]


def build_spaces(mesh: BackgroundMesh, band, m: int = 1) -> BandDofMap:
    """Velocity on the band elements, pressure on the cut elements."""
    if m < 1:
        raise ValueError("Taylor-Hood order m must be >= 1")
    if len(band.band_elements) == 0:
        raise ValueError("empty band")
    return BandDofMap(m, scalar_dofmap(mesh, m + 1, band.band_elements), scalar_dofmap(mesh, m, band.cut_elements))


@dataclass(eq=False)
class FEField:
    """Coefficients on a scalar dofmap; ``components`` is 3 for velocity, 1 for pressure."""

    dofmap: ScalarDofMap
    values: np.ndarray  # (n_nodes, components) or (n_nodes,)

    @property
    def kind(self) -> str:
        return "velocity" if self.values.ndim == 2 else "pressure"

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def to_global(self) -> np.ndarray:
        """Lattice-indexed copy with NaN on inactive nodes."""
        shape = (node_count(self.dofmap.mesh, self.dofmap.degree),) + self.values.shape[1:]
        out = np.full(shape, np.nan)
        out[self.dofmap.nodes] = self.values
        return out

    def evaluate(self, tets, points) -> tuple[np.ndarray, np.ndarray]:
        """Values and gradients at physical points inside active tets.

        Returns ``(values, grads)`` with grads[..., a, b] = d value_a / d x_b
        for vector fields.
        """
        return evaluate_global(self.dofmap.mesh, self.dofmap.degree, self.global_values, tets, points)

    @cached_property
    def global_values(self) -> np.ndarray:
        return self.to_global()


def evaluate_global(mesh: BackgroundMesh, degree: int, global_values: np.ndarray, tets, points):
    """Evaluate a lattice-indexed field at points in tets; NaN entries raise."""
    tets = np.asarray(tets)
    points = np.asarray(points, float)
    basis = lagrange_basis(degree)
    xi = barycentric(mesh, tets, points)
    vals = basis.values(xi.reshape(-1, 3)).reshape(*xi.shape[:-1], basis.size)
    rg = basis.reference_gradients(xi.reshape(-1, 3)).reshape(*xi.shape[:-1], basis.size, 3)
    grads = physical_gradients(rg, mesh.inverse_jacobians[tets])
    coef = global_values[element_nodes(mesh, degree)[tets]]
    if np.isnan(coef).any():
        raise InactiveElementError("field evaluated outside its active elements")
    if coef.ndim == tets.ndim + 1:  # scalar
        return np.einsum("...b,...b->...", vals, coef), np.einsum("...bx,...b->...x", grads, coef)
    return np.einsum("...b,...bc->...c", vals, coef), np.einsum("...bx,...bc->...cx", grads, coef)


def interpolate_analytic(f: Callable[[np.ndarray], np.ndarray], dofmap: ScalarDofMap) -> FEField:
    """Nodal interpolant: coefficients are f at the Lagrange nodes."""
    return FEField(dofmap, np.asarray(f(dofmap.coordinates()), float))
