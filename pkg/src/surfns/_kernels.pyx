# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; same contracts as ``_pykernels``."""
import numpy as np
cimport cython
from cython.parallel cimport prange
from libc.math cimport sqrt


cdef inline void _lerp(const double[:, :, ::1] c, const double[:, ::1] f,
                       Py_ssize_t t, int a, int b, double* out) noexcept nogil:
    cdef double s = f[t, a] / (f[t, a] - f[t, b])
    cdef int d
    for d in range(3):
        out[d] = c[t, a, d] + s * (c[t, b, d] - c[t, a, d])


cdef inline double _emit(double* p0, double* p1, double* p2, const double[:, ::1] g,
                         Py_ssize_t t, double[:, :, ::1] tri, Py_ssize_t slot) noexcept nogil:
    cdef double u[3]
    cdef double v[3]
    cdef double n[3]
    cdef int d
    for d in range(3):
        u[d] = p1[d] - p0[d]
        v[d] = p2[d] - p0[d]
    n[0] = u[1] * v[2] - u[2] * v[1]
    n[1] = u[2] * v[0] - u[0] * v[2]
    n[2] = u[0] * v[1] - u[1] * v[0]
    cdef bint flip = n[0] * g[t, 0] + n[1] * g[t, 1] + n[2] * g[t, 2] < 0
    for d in range(3):
        tri[slot, 0, d] = p0[d]
        if flip:
            tri[slot, 1, d] = p2[d]
            tri[slot, 2, d] = p1[d]
        else:
            tri[slot, 1, d] = p1[d]
            tri[slot, 2, d] = p2[d]
    return 0.5 * sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2])


def cut_tetrahedra(coords, phi, signs, grads, double min_area):
    cdef const double[:, :, ::1] c = np.ascontiguousarray(coords, dtype=np.float64)
    cdef const double[:, ::1] f = np.ascontiguousarray(phi, dtype=np.float64)
    cdef const long[:, ::1] s = np.ascontiguousarray(signs, dtype=np.int_)
    cdef const double[:, ::1] g = np.ascontiguousarray(grads, dtype=np.float64)
    cdef Py_ssize_t n = f.shape[0]
    tri_arr = np.empty((2 * n, 3, 3))
    par_arr = np.empty(2 * n, dtype=np.int64)
    cdef double[:, :, ::1] tri = tri_arr
    cdef long long[::1] par = par_arr
    cdef Py_ssize_t t, m = 0
    cdef int i, nneg, lone, j
    cdef int neg[4]
    cdef int pos[4]
    cdef int nn, np_
    cdef double q[4][3]
    cdef double area, d02, d13, dx
    for t in range(n):
        nn = 0
        np_ = 0
        for i in range(4):
            if s[t, i] < 0:
                neg[nn] = i
                nn += 1
            else:
                pos[np_] = i
                np_ += 1
        if nn == 0 or nn == 4:
            continue
        if nn == 1 or nn == 3:
            if nn == 1:
                lone = neg[0]
                for j in range(3):
                    _lerp(c, f, t, lone, pos[j], q[j])
            else:
                lone = pos[0]
                for j in range(3):
                    _lerp(c, f, t, lone, neg[j], q[j])
            area = _emit(q[0], q[1], q[2], g, t, tri, m)
            if area > min_area:
                par[m] = t
                m += 1
        else:
            _lerp(c, f, t, neg[0], pos[0], q[0])
            _lerp(c, f, t, neg[0], pos[1], q[1])
            _lerp(c, f, t, neg[1], pos[1], q[2])
            _lerp(c, f, t, neg[1], pos[0], q[3])
            d02 = 0.0
            d13 = 0.0
            for j in range(3):
                dx = q[0][j] - q[2][j]
                d02 += dx * dx
                dx = q[1][j] - q[3][j]
                d13 += dx * dx
            if sqrt(d02) <= sqrt(d13):
                area = _emit(q[0], q[1], q[2], g, t, tri, m)
                if area > min_area:
                    par[m] = t
                    m += 1
                area = _emit(q[0], q[2], q[3], g, t, tri, m)
            else:
                area = _emit(q[0], q[1], q[3], g, t, tri, m)
                if area > min_area:
                    par[m] = t
                    m += 1
                area = _emit(q[1], q[2], q[3], g, t, tri, m)
            if area > min_area:
                par[m] = t
                m += 1
    return tri_arr[:m].copy(), par_arr[:m].copy()


def weighted_gram(left, right, weights):
    cdef const double[:, :, :, ::1] L = np.ascontiguousarray(left, dtype=np.float64)
    cdef const double[:, :, :, ::1] R = np.ascontiguousarray(right, dtype=np.float64)
    cdef const double[:, ::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t ne = L.shape[0], nq = L.shape[1], ni = L.shape[2], nk = L.shape[3]
    cdef Py_ssize_t nj = R.shape[2]
    out_arr = np.zeros((ne, ni, nj))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t e, qq, i, j, k
    cdef double acc, wq
    for e in prange(ne, nogil=True, schedule="static"):
        for qq in range(nq):
            wq = w[e, qq]
            for i in range(ni):
                for j in range(nj):
                    acc = 0.0
                    for k in range(nk):
                        acc = acc + L[e, qq, i, k] * R[e, qq, j, k]
                    out[e, i, j] += wq * acc
    return out_arr
