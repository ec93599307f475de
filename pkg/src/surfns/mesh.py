"""Uniform Kuhn-split tetrahedral mesh of an axis-aligned box."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import permutations

import numpy as np

DEFAULT_MAX_TETS = 20_000_000


class MeshSizeError(ValueError):
    """Raised when a requested mesh would exceed the configured memory cap."""


@dataclass(frozen=True)
class BoxDomain:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        if len(self.lo) != 3 or len(self.hi) != 3:
            raise ValueError("BoxDomain needs 3-vectors")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"degenerate box {self.lo} .. {self.hi}")

    @property
    def lengths(self) -> np.ndarray:
        return np.asarray(self.hi, float) - np.asarray(self.lo, float)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))


# Box containing the moving unit sphere for t in [0, 2]
PAPER_DOMAIN = BoxDomain((-4 / 3, -4 / 3, -4 / 3), (10 / 3, 4 / 3, 4 / 3))

# Kuhn split: each tet walks from corner (0,0,0) to (1,1,1) along one
# coordinate permutation; orientation fixed afterwards.
_CUBE_CORNERS = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)])


def _kuhn_tets() -> np.ndarray:
    tets = []
    for perm in permutations(range(3)):
        path = [np.zeros(3, int)]
        for axis in perm:
            nxt = path[-1].copy()
            nxt[axis] = 1
            path.append(nxt)
        ids = [int(p[0] * 4 + p[1] * 2 + p[2]) for p in path]
        a, b, c, d = (_CUBE_CORNERS[i] for i in ids)
        if np.linalg.det(np.array([b - a, c - a, d - a])) < 0:
            ids[1], ids[2] = ids[2], ids[1]
        tets.append(ids)
    return np.array(tets)


KUHN_TETS = _kuhn_tets()


@dataclass(frozen=True, eq=False)
class BackgroundMesh:
    """Immutable conforming tet mesh; ``h`` is the declared (cube edge) mesh size."""

    domain: BoxDomain
    cells: tuple[int, int, int]
    h: float
    vertices: np.ndarray
    tets: np.ndarray
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    @property
    def spacing(self) -> np.ndarray:
        return self.domain.lengths / np.asarray(self.cells)

    @cached_property
    def vertex_lattice(self) -> np.ndarray:
        """Integer grid coordinates of every vertex."""
        idx = np.arange(self.n_vertices)
        return np.stack(np.unravel_index(idx, tuple(c + 1 for c in self.cells)), axis=1)

    @cached_property
    def jacobians(self) -> np.ndarray:
        """(nt, 3, 3) affine map columns v1-v0, v2-v0, v3-v0."""
        v = self.vertices[self.tets]
        return np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0], v[:, 3] - v[:, 0]], axis=2)

    @cached_property
    def inverse_jacobians(self) -> np.ndarray:
        return np.linalg.inv(self.jacobians)

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.linalg.det(self.jacobians) / 6.0

    @cached_property
    def barycentric_gradients(self) -> np.ndarray:
        """(nt, 4, 3) gradients of the four barycentric coordinates."""
        jinv = self.inverse_jacobians  # rows = grad of lambda_1..3
        g = np.empty((self.n_tets, 4, 3))
        g[:, 1:] = jinv
        g[:, 0] = -jinv.sum(axis=1)
        return g

    @cached_property
    def vertex_to_tets(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR (offsets, tet ids) of the tets incident to each vertex."""
        flat = self.tets.ravel()
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=self.n_vertices)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return offsets, order // 4

    @cached_property
    def face_neighbors(self) -> np.ndarray:
        """(nt, 4) neighbor across the face opposite local vertex i, -1 on the boundary."""
        faces = np.stack([np.delete(self.tets, i, axis=1) for i in range(4)], axis=1)
        keys = np.sort(faces, axis=2).reshape(-1, 3)
        _, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inv = inv.ravel()
        nbr = np.full(keys.shape[0], -1)
        order = np.argsort(inv, kind="stable")
        sinv = inv[order]
        pair = np.nonzero(sinv[1:] == sinv[:-1])[0]
        a, b = order[pair], order[pair + 1]
        nbr[a] = b // 4
        nbr[b] = a // 4
        if counts.max() > 2:
            raise RuntimeError("non-manifold face in tet mesh")
        return nbr.reshape(-1, 4)

    def max_diameter(self) -> float:
        v = self.vertices[self.tets]
        d = 0.0
        for i in range(4):
            for j in range(i + 1, 4):
                d = max(d, float(np.linalg.norm(v[:, i] - v[:, j], axis=1).max()))
        return d

    def radius_ratios(self) -> np.ndarray:
        """Circumradius / inradius for every tet."""
        v = self.vertices[self.tets]
        vol = self.volumes
        area = np.zeros(self.n_tets)
        for i in range(4):
            f = np.delete(v, i, axis=1)
            area += 0.5 * np.linalg.norm(np.cross(f[:, 1] - f[:, 0], f[:, 2] - f[:, 0]), axis=1)
        r_in = 3 * vol / area
        a = self.jacobians.transpose(0, 2, 1)  # rows = edge vectors from v0
        rhs = 0.5 * (a**2).sum(axis=2)
        center = np.linalg.solve(a, rhs[..., None])[..., 0]
        r_circ = np.linalg.norm(center, axis=1)
        return r_circ / r_in

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Index of a tet containing each point (points must lie inside the box)."""
        pts = np.atleast_2d(points)
        lo = np.asarray(self.domain.lo)
        rel = (pts - lo) / self.spacing
        cell = np.clip(np.floor(rel).astype(int), 0, np.asarray(self.cells) - 1)
        cube = np.ravel_multi_index(cell.T, self.cells)
        out = np.full(len(pts), -1)
        for k in range(6):
            tids = cube * 6 + k
            lam = np.einsum("nij,nj->ni", self.inverse_jacobians[tids], pts - self.vertices[self.tets[tids, 0]])
            inside = (lam.min(axis=1) >= -1e-12) & (lam.sum(axis=1) <= 1 + 1e-12)
            out = np.where((out < 0) & inside, tids, out)
        if (out < 0).any():
            raise ValueError("point outside mesh")
        return out


def build_uniform_mesh(domain: BoxDomain, target_h: float, max_tets: int = DEFAULT_MAX_TETS) -> BackgroundMesh:
    """Kuhn-split uniform mesh whose cube edges are at most ``target_h``.

    The cube count per axis is ceil(L_i / target_h), so the box is tiled
    exactly and every tet has diameter <= sqrt(3) * target_h.
    """
    if not target_h > 0:
        raise ValueError(f"target_h must be positive, got {target_h}")
    cells = tuple(int(math.ceil(L / target_h - 1e-9)) for L in domain.lengths)
    return _build(domain, cells, float(target_h), max_tets)


def refine(mesh: BackgroundMesh, max_tets: int = DEFAULT_MAX_TETS) -> BackgroundMesh:
    """Rebuild with every cube edge halved (8x the cubes, h/2)."""
    cells = tuple(2 * c for c in mesh.cells)
    return _build(mesh.domain, cells, mesh.h / 2, max_tets)


def _build(domain: BoxDomain, cells: tuple[int, int, int], h: float, max_tets: int) -> BackgroundMesh:
    n_tets = 6 * cells[0] * cells[1] * cells[2]
    if n_tets > max_tets:
        raise MeshSizeError(f"{n_tets} tets exceeds cap {max_tets}")
    nx, ny, nz = cells
    axes = [np.linspace(domain.lo[i], domain.hi[i], cells[i] + 1) for i in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    vertices = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    ci, cj, ck = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    base = np.stack([ci.ravel(), cj.ravel(), ck.ravel()], axis=1)
    shape_v = (nx + 1, ny + 1, nz + 1)
    corner_ids = np.empty((len(base), 8), dtype=np.int64)
    for c, off in enumerate(_CUBE_CORNERS):
        g = base + off
        corner_ids[:, c] = np.ravel_multi_index(g.T, shape_v)
    tets = corner_ids[:, KUHN_TETS].reshape(-1, 4)
    return BackgroundMesh(domain, cells, h, vertices, tets)


def write_vtk(mesh: BackgroundMesh, path, cell_data: dict[str, np.ndarray] | None = None) -> None:
    """Legacy ASCII VTK unstructured grid (cell type 10)."""
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\nbackground mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_vertices} double\n")
        np.savetxt(fh, mesh.vertices, fmt="%.16g")
        fh.write(f"CELLS {mesh.n_tets} {5 * mesh.n_tets}\n")
        np.savetxt(fh, np.hstack([np.full((mesh.n_tets, 1), 4), mesh.tets]), fmt="%d")
        fh.write(f"CELL_TYPES {mesh.n_tets}\n")
        np.savetxt(fh, np.full(mesh.n_tets, 10), fmt="%d")
        if cell_data:
            fh.write(f"CELL_DATA {mesh.n_tets}\n")
            for name, values in cell_data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                np.savetxt(fh, np.asarray(values, float), fmt="%.16g")
