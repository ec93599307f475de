"""Level-set representation of the surface and the discrete geometry derived from it."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import dual
from .fespace import element_nodes, evaluate_global, node_coordinates, node_count
from .mesh import BackgroundMesh
from .quadrature import tetrahedron_rule

GRAD_EPS = 1e-12


class DegenerateGradientError(ArithmeticError):
    pass


class UnsupportedConfigurationError(NotImplementedError):
    pass


class SurfaceLeftDomainError(RuntimeError):
    pass


class MovingSphere:
    """phi(t, x) = |x - g(t)|^2 - R^2 with a center moving at constant velocity."""

    def __init__(self, velocity=(0.2, 0.0, 0.0), radius: float = 1.0, origin=(0.0, 0.0, 0.0)):
        self.velocity = np.asarray(velocity, float)
        self.radius = float(radius)
        self.origin = np.asarray(origin, float)

    def center(self, t: float) -> np.ndarray:
        return self.origin + t * self.velocity

    def phi(self, t, x):
        d = np.asarray(x, float) - self.center(t)
        return np.einsum("...i,...i->...", d, d) - self.radius**2

    def grad(self, t, x):
        return 2.0 * (np.asarray(x, float) - self.center(t))

    def dphi_dt(self, t, x):
        d = np.asarray(x, float) - self.center(t)
        return -2.0 * d @ self.velocity

    def closest_point(self, t, x):
        d = np.asarray(x, float) - self.center(t)
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        return self.center(t) + self.radius * d / r

    def normal(self, t, x):
        d = np.asarray(x, float) - self.center(t)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def signed_distance(self, t, x):
        return np.linalg.norm(np.asarray(x, float) - self.center(t), axis=-1) - self.radius

    def closest_point_jacobian(self, t, x):
        """d cp / dx = (R / r) (I - n n^T)."""
        d = np.asarray(x, float) - self.center(t)
        r = np.linalg.norm(d, axis=-1)
        n = d / r[..., None]
        return (self.radius / r)[..., None, None] * (np.eye(3) - n[..., :, None] * n[..., None, :])

    def weingarten(self, t, x):
        """H = P / r, the Weingarten map of the concentric sphere through x."""
        d = np.asarray(x, float) - self.center(t)
        r = np.linalg.norm(d, axis=-1)
        n = d / r[..., None]
        return (np.eye(3) - n[..., :, None] * n[..., None, :]) / r[..., None, None]

    def normal_expr(self, t, X):
        """Unit normal (x - g) / |x - g| written for scalar, array or dual arguments."""
        d = [X[i] - (self.origin[i] + t * self.velocity[i]) for i in range(3)]
        r = dual.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        return [di / r for di in d]


class Plane:
    """phi(t, x) = n . x - offset, a stationary flat surface."""

    def __init__(self, normal=(0.0, 0.0, 1.0), offset: float = 0.0):
        n = np.asarray(normal, float)
        self.n = n / np.linalg.norm(n)
        self.offset = float(offset)

    def phi(self, t, x):
        return np.asarray(x, float) @ self.n - self.offset

    def grad(self, t, x):
        return np.broadcast_to(self.n, np.shape(x)).copy()

    def dphi_dt(self, t, x):
        return np.zeros(np.shape(x)[:-1])

    def closest_point(self, t, x):
        x = np.asarray(x, float)
        return x - self.phi(t, x)[..., None] * self.n

    def normal(self, t, x):
        return self.grad(t, x)

    def signed_distance(self, t, x):
        return self.phi(t, x)

    def closest_point_jacobian(self, t, x):
        P = np.eye(3) - np.outer(self.n, self.n)
        return np.broadcast_to(P, np.shape(x)[:-1] + (3, 3)).copy()

    def weingarten(self, t, x):
        return np.zeros(np.shape(x)[:-1] + (3, 3))

    def normal_expr(self, t, X):
        return [float(c) for c in self.n]


PAPER_SPHERE = MovingSphere()


def exact_levelset(t: float, x, geometry=PAPER_SPHERE):
    """phi(t, x) = |x - g(t)|^2 - 1 for the default moving sphere."""
    return geometry.phi(t, x)


def normal_speed(t: float, x, geometry=PAPER_SPHERE):
    """w_N = -phi_t / |grad phi|."""
    g = np.linalg.norm(geometry.grad(t, x), axis=-1)
    if np.any(g < GRAD_EPS):
        raise DegenerateGradientError("level set gradient vanishes")
    return -geometry.dphi_dt(t, x) / g


@dataclass(frozen=True, eq=False)
class DiscreteLevelSet:
    """P_q nodal interpolant phi_h plus the P_{q+1} companion used for the improved normal."""

    mesh: BackgroundMesh
    t: float
    q: int
    vertex_values: np.ndarray  # (nv,)
    fine_values: np.ndarray  # lattice-indexed P_{q+1} nodal values

    @cached_property
    def gradients(self) -> np.ndarray:
        """(nt, 3) elementwise constant grad phi_h."""
        bg = self.mesh.barycentric_gradients
        return np.einsum("tv,tvx->tx", self.vertex_values[self.mesh.tets], bg)

    @cached_property
    def sup_norm(self) -> float:
        return float(np.abs(self.vertex_values).max())

    @cached_property
    def signs(self) -> np.ndarray:
        """Vertex signs with near-zero values counted as positive."""
        tol = 1e-14 * (1.0 + self.sup_norm)
        return np.where(self.vertex_values < -tol, -1, 1)

    def values_at(self, tets, points) -> np.ndarray:
        v0 = self.mesh.vertices[self.mesh.tets[tets, 0]]
        return self.vertex_values[self.mesh.tets[tets, 0]] + np.einsum(
            "...x,...x->...", self.gradients[tets], points - v0
        )

    def fine_gradients_at(self, tets, points) -> np.ndarray:
        return evaluate_global(self.mesh, self.q + 1, self.fine_values, tets, points)[1]


def interpolate_levelset(mesh: BackgroundMesh, t: float, q: int = 1, geometry=PAPER_SPHERE) -> DiscreteLevelSet:
    if q != 1:
        raise UnsupportedConfigurationError(
            "only piecewise linear geometry (q=1) is supported; q>=2 needs curved cut quadrature"
        )
    vertex_values = geometry.phi(t, mesh.vertices)
    fine_ids = np.arange(node_count(mesh, q + 1))
    fine_values = geometry.phi(t, node_coordinates(mesh, q + 1, fine_ids))
    return DiscreteLevelSet(mesh, float(t), q, vertex_values, fine_values)


def oswald_average(mesh: BackgroundMesh, element_values: np.ndarray, degree: int, elements=None) -> np.ndarray:
    """Nodal arithmetic mean of an elementwise field over the elements sharing each node.

    ``element_values`` is (ne, nb, ...) values at the degree-k local nodes, or
    (ne, ...) for an elementwise constant field (broadcast to the nodes).  The
    result is lattice-indexed with NaN on nodes not touched by ``elements``.
    """
    if elements is None:
        elements = np.arange(mesh.n_tets)
    enodes = element_nodes(mesh, degree)[elements]
    vals = np.asarray(element_values, float)
    nb = enodes.shape[1]
    if vals.ndim == 1 or vals.shape[1] != nb:
        vals = np.broadcast_to(vals[:, None], (len(elements), nb) + vals.shape[1:])
    tail = vals.shape[2:]
    flat_ids = enodes.ravel()
    n = node_count(mesh, degree)
    counts = np.bincount(flat_ids, minlength=n).astype(float)
    flat_vals = vals.reshape(len(flat_ids), -1)
    sums = np.stack([np.bincount(flat_ids, weights=flat_vals[:, j], minlength=n) for j in range(flat_vals.shape[1])], axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = sums / counts[:, None]
    return out.reshape((n,) + tail)


@dataclass(frozen=True)
class GeometrySample:
    n_h: np.ndarray
    n_tilde: np.ndarray
    P: np.ndarray
    H: np.ndarray


class GeometricFields:
    """n_h, averaged normal, Weingarten approximation and improved normal of a discrete level set."""

    def __init__(self, ls: DiscreteLevelSet, renormalize_improved: bool = True):
        self.ls = ls
        self.mesh = ls.mesh
        self.renormalize_improved = renormalize_improved

    @cached_property
    def grad_norms(self) -> np.ndarray:
        return np.linalg.norm(self.ls.gradients, axis=1)

    @cached_property
    def normals(self) -> np.ndarray:
        """(nt, 3) n_h; zero on tets with a vanishing gradient."""
        g = self.ls.gradients
        norm = self.grad_norms
        out = np.zeros_like(g)
        ok = norm > GRAD_EPS
        out[ok] = g[ok] / norm[ok, None]
        return out

    @cached_property
    def projectors(self) -> np.ndarray:
        n = self.normals
        return np.eye(3) - n[:, :, None] * n[:, None, :]

    @cached_property
    def averaged_normal(self) -> np.ndarray:
        """Oswald average of n_h into continuous P_q, lattice-indexed (n_nodes, 3)."""
        return oswald_average(self.mesh, self.normals, self.ls.q)

    @cached_property
    def weingarten(self) -> np.ndarray:
        """(nt, 3, 3) H_h = P_h grad(nbar_h) P_h, elementwise constant for q=1."""
        nbar = self.averaged_normal[element_nodes(self.mesh, self.ls.q)]  # (nt, nb, 3)
        grad_nbar = np.einsum("tva,tvb->tab", nbar, self.mesh.barycentric_gradients)
        P = self.projectors
        return P @ grad_nbar @ P

    def improved_normal(self, tets, points) -> np.ndarray:
        g = self.ls.fine_gradients_at(tets, points)
        if self.renormalize_improved:
            denom = np.linalg.norm(g, axis=-1, keepdims=True)
        else:
            denom = self.grad_norms[tets][..., None]
        if np.any(denom < GRAD_EPS):
            raise DegenerateGradientError("improved normal undefined")
        return g / denom

    def averaged_normal_at(self, tets, points) -> np.ndarray:
        return evaluate_global(self.mesh, self.ls.q, self.averaged_normal, tets, points)[0]

    def sample(self, tets, points) -> GeometrySample:
        tets = np.asarray(tets)
        if np.any(self.grad_norms[tets] < GRAD_EPS):
            raise DegenerateGradientError("level set gradient vanishes in element")
        return GeometrySample(
            n_h=self.normals[tets],
            n_tilde=self.improved_normal(tets, points),
            P=self.projectors[tets],
            H=self.weingarten[tets],
        )


@dataclass(frozen=True)
class BandClassification:
    cut_elements: np.ndarray
    band_elements: np.ndarray
    delta: float


def cut_elements(ls: DiscreteLevelSet) -> np.ndarray:
    s = ls.signs[ls.mesh.tets]
    return np.nonzero((s.min(axis=1) < 0) & (s.max(axis=1) > 0))[0]


def classify_elements(ls: DiscreteLevelSet, delta: float, cut=None) -> BandClassification:
    """Cut tets and the delta-band measured with the proxy |phi_h| / |grad phi_h|."""
    if delta < 0:
        raise ValueError("band width must be non-negative")
    if cut is None:
        cut = cut_elements(ls)
    if len(cut) == 0:
        raise SurfaceLeftDomainError(f"no element is cut by the surface at t={ls.t}")
    mesh = ls.mesh
    gnorm = np.linalg.norm(ls.gradients, axis=1)
    vals = ls.vertex_values[mesh.tets]  # (nt, 4)
    sample_bary = np.vstack([np.eye(4), tetrahedron_rule(2).points])
    sample_vals = vals @ sample_bary.T  # (nt, 8)
    with np.errstate(divide="ignore", invalid="ignore"):
        proxy = np.abs(sample_vals).min(axis=1) / gnorm
    proxy[gnorm < GRAD_EPS] = np.inf
    band = np.union1d(np.nonzero(proxy <= delta)[0], cut)
    return BandClassification(np.asarray(cut), band, float(delta))

