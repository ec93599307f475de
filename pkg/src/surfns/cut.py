"""Zero-level triangulation of a P1 level set and quadrature on the cut surface and bands."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .levelset import DiscreteLevelSet
from .mesh import BackgroundMesh
from .quadrature import QuadratureRule, tetrahedron_rule, triangle_rule

SURFACE_DEGREE = 6
VOLUME_DEGREE = 4


@dataclass(frozen=True, eq=False)
class CutSurface:
    """Triangles of Gamma_h with their parent tets and a mapped quadrature rule."""

    triangles: np.ndarray  # (nT, 3, 3)
    parents: np.ndarray  # (nT,) global tet ids
    areas: np.ndarray  # (nT,)
    points: np.ndarray = field(repr=False)  # (nT, Q, 3)
    weights: np.ndarray = field(repr=False)  # (nT, Q)
    rule: QuadratureRule = field(repr=False)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @property
    def n_points(self) -> int:
        return self.weights.size

    def integrate(self, values: np.ndarray) -> float:
        """Integral of values sampled at ``points`` (shape (nT, Q) or (nT, Q, ...))."""
        return np.tensordot(self.weights, values, axes=([0, 1], [0, 1]))


def triangulate_zero_level(ls: DiscreteLevelSet, tets) -> tuple[np.ndarray, np.ndarray]:
    """Marching-tetrahedra triangles of {phi_h = 0} in the given tets.

    Returns ``(triangles, parents)``; parents are global tet ids.  Tets without
    a sign change contribute nothing.  Triangles are oriented along grad phi_h.
    """
    tets = np.atleast_1d(np.asarray(tets, dtype=np.int64))
    mesh = ls.mesh
    coords = mesh.vertices[mesh.tets[tets]]
    phi = ls.vertex_values[mesh.tets[tets]]
    signs = ls.signs[mesh.tets[tets]].astype(np.int_)
    min_area = 1e-14 * mesh.h**2
    tri, rows = kernels.cut_tetrahedra(coords, phi, signs, ls.gradients[tets], min_area)
    return tri, tets[rows]


def _triangle_areas(tri: np.ndarray) -> np.ndarray:
    return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)


def surface_quadrature(triangles: np.ndarray, degree: int = SURFACE_DEGREE):
    """Map a symmetric triangle rule onto each physical triangle."""
    rule = triangle_rule(degree)
    pts = np.einsum("qi,tix->tqx", rule.points, triangles)
    wts = 2.0 * _triangle_areas(triangles)[:, None] * rule.weights[None, :]
    return pts, wts, rule


def build_cut_surface(ls: DiscreteLevelSet, cut_tets, degree: int = SURFACE_DEGREE) -> CutSurface:
    tri, parents = triangulate_zero_level(ls, cut_tets)
    pts, wts, rule = surface_quadrature(tri, degree)
    return CutSurface(tri, parents, _triangle_areas(tri), pts, wts, rule)


def band_volume_quadrature(mesh: BackgroundMesh, tets, degree: int = VOLUME_DEGREE):
    """Points (n, Q, 3) and weights (n, Q) of a tet rule over whole elements."""
    tets = np.asarray(tets, dtype=np.int64)
    rule = tetrahedron_rule(degree)
    pts = np.einsum("qi,tix->tqx", rule.points, mesh.vertices[mesh.tets[tets]])
    wts = 6.0 * mesh.volumes[tets][:, None] * rule.weights[None, :]
    return pts, wts, rule


def write_obj(cut: CutSurface, path) -> None:
    with open(path, "w") as fh:
        for tri in cut.triangles:
            for p in tri:
                fh.write(f"v {p[0]:.16g} {p[1]:.16g} {p[2]:.16g}\n")
        for i in range(len(cut.triangles)):
            fh.write(f"f {3 * i + 1} {3 * i + 2} {3 * i + 3}\n")


def write_vtk(cut: CutSurface, path) -> None:
    """Legacy ASCII VTK polydata of the cut triangles with the parent tet id."""
    n = len(cut.triangles)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\ncut surface\nASCII\nDATASET POLYDATA\n")
        fh.write(f"POINTS {3 * n} double\n")
        np.savetxt(fh, cut.triangles.reshape(-1, 3), fmt="%.16g")
        fh.write(f"POLYGONS {n} {4 * n}\n")
        np.savetxt(fh, np.hstack([np.full((n, 1), 3), np.arange(3 * n).reshape(n, 3)]), fmt="%d")
        fh.write(f"CELL_DATA {n}\nSCALARS parent int 1\nLOOKUP_TABLE default\n")
        np.savetxt(fh, cut.parents, fmt="%d")
