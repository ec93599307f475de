"""Pure numpy implementations of the hot kernels (fallback for ``_kernels``)."""
from __future__ import annotations

import numpy as np


def _interp(x0, x1, f0, f1):
    s = f0 / (f0 - f1)
    return x0 + s[:, None] * (x1 - x0)


def _orient(tri, grads):
    nrm = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    flip = np.einsum("ij,ij->i", nrm, grads) < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    return tri, np.linalg.norm(nrm, axis=1) * 0.5


def cut_tetrahedra(coords, phi, signs, grads, min_area):
    """Zero-level triangles of linear fields on tets.

    coords (n,4,3), phi (n,4), signs (n,4) in {-1,+1}, grads (n,3).
    Returns (triangles (m,3,3), parent row (m,)).
    """
    coords = np.asarray(coords, float)
    phi = np.asarray(phi, float)
    neg = np.asarray(signs) < 0
    k = neg.sum(axis=1)
    rows = np.arange(len(phi))
    tris, parents = [], []

    one = np.nonzero((k == 1) | (k == 3))[0]
    if len(one):
        key = np.where(k[one, None] == 1, ~neg[one], neg[one])
        order = np.argsort(key, axis=1, kind="stable")
        lone = order[:, 0]
        r = rows[one]
        x0, f0 = coords[r, lone], phi[r, lone]
        pts = [
            _interp(x0, coords[r, order[:, j]], f0, phi[r, order[:, j]])
            for j in (1, 2, 3)
        ]
        tris.append(np.stack(pts, axis=1))
        parents.append(one)

    two = np.nonzero(k == 2)[0]
    if len(two):
        order = np.argsort(~neg[two], axis=1, kind="stable")
        r = rows[two]
        n0, n1, p0, p1 = (order[:, j] for j in range(4))

        def edge(a, b):
            return _interp(coords[r, a], coords[r, b], phi[r, a], phi[r, b])

        q = np.stack([edge(n0, p0), edge(n0, p1), edge(n1, p1), edge(n1, p0)], axis=1)
        d02 = np.linalg.norm(q[:, 0] - q[:, 2], axis=1)
        d13 = np.linalg.norm(q[:, 1] - q[:, 3], axis=1)
        use02 = d02 <= d13
        t1 = np.where(use02[:, None, None], q[:, [0, 1, 2]], q[:, [0, 1, 3]])
        t2 = np.where(use02[:, None, None], q[:, [0, 2, 3]], q[:, [1, 2, 3]])
        tris += [t1, t2]
        parents += [two, two]

    if not tris:
        return np.zeros((0, 3, 3)), np.zeros(0, dtype=np.int64)
    tri = np.concatenate(tris)
    par = np.concatenate(parents).astype(np.int64)
    order = np.argsort(par, kind="stable")
    tri, par = tri[order], par[order]
    tri, area = _orient(tri, np.asarray(grads, float)[par])
    keep = area > min_area
    return np.ascontiguousarray(tri[keep]), par[keep]


def weighted_gram(left, right, weights):
    """out[e,i,j] = sum_q w[e,q] sum_k left[e,q,i,k] right[e,q,j,k]."""
    left = np.asarray(left, float)
    right = np.asarray(right, float)
    e, q, i, k = left.shape
    j = right.shape[2]
    lw = left * np.asarray(weights, float)[:, :, None, None]
    a = lw.transpose(0, 2, 1, 3).reshape(e, i, q * k)
    b = right.transpose(0, 2, 1, 3).reshape(e, j, q * k)
    return a @ b.transpose(0, 2, 1)
