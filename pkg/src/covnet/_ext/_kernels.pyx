# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors covnet._ext.fallback function for function."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


cdef inline bint _inside(const double[:, :, ::1] maps, const double[:, ::1] planes,
                         const double[::1] aff_tol, const double[:, ::1] targets,
                         Py_ssize_t f, Py_ssize_t d, Py_ssize_t k,
                         double eps_mem, bint planar) nogil:
    cdef Py_ssize_t a
    cdef double x = targets[d, 0], y = targets[d, 1], z = targets[d, 2], s
    if planar:
        s = planes[f, 0] * x + planes[f, 1] * y + planes[f, 2] * z + planes[f, 3]
        if fabs(s) > aff_tol[f]:
            return False
    for a in range(k):
        s = maps[f, a, 0] * x + maps[f, a, 1] * y + maps[f, a, 2] * z + maps[f, a, 3]
        if s < -eps_mem:
            return False
    return True


def hull_membership(maps, planes, aff_tol, targets, double eps_mem, bint planar):
    cdef const double[:, :, ::1] M = np.ascontiguousarray(maps, dtype=np.float64)
    cdef const double[:, ::1] P = np.ascontiguousarray(planes, dtype=np.float64)
    cdef const double[::1] tol = np.ascontiguousarray(aff_tol, dtype=np.float64)
    cdef const double[:, ::1] T = np.ascontiguousarray(targets, dtype=np.float64)
    cdef Py_ssize_t F = M.shape[0], k = M.shape[1], nd = T.shape[0], f, d
    out = np.zeros((F, nd), dtype=np.bool_)
    cdef cnp.npy_bool[:, ::1] o = out
    with nogil:
        for f in range(F):
            for d in range(nd):
                if _inside(M, P, tol, T, f, d, k, eps_mem, planar):
                    o[f, d] = 1
    return out


def hull_stats(maps, planes, aff_tol, targets, intensity, double eps_mem, bint planar):
    cdef const double[:, :, ::1] M = np.ascontiguousarray(maps, dtype=np.float64)
    cdef const double[:, ::1] P = np.ascontiguousarray(planes, dtype=np.float64)
    cdef const double[::1] tol = np.ascontiguousarray(aff_tol, dtype=np.float64)
    cdef const double[:, ::1] T = np.ascontiguousarray(targets, dtype=np.float64)
    cdef const double[::1] I = np.ascontiguousarray(intensity, dtype=np.float64)
    cdef Py_ssize_t F = M.shape[0], k = M.shape[1], nd = T.shape[0], f, d
    counts = np.zeros(F, dtype=np.int64)
    wsum = np.zeros((F, 3))
    isum = np.zeros(F)
    cdef cnp.int64_t[::1] c = counts
    cdef double[:, ::1] ws = wsum
    cdef double[::1] iss = isum
    cdef double wt
    with nogil:
        for f in range(F):
            for d in range(nd):
                if _inside(M, P, tol, T, f, d, k, eps_mem, planar):
                    wt = I[d]
                    c[f] += 1
                    ws[f, 0] += wt * T[d, 0]
                    ws[f, 1] += wt * T[d, 1]
                    ws[f, 2] += wt * T[d, 2]
                    iss[f] += wt
    return counts, wsum, isum


cdef void _deriv(const double[:, :, ::1] s, const cnp.int64_t[:, ::1] nbr,
                 const double[:, ::1] w, const double[:, ::1] ref,
                 const cnp.npy_bool[::1] leader, const double[:, ::1] g,
                 double[:, :, ::1] out) nogil:
    cdef Py_ssize_t N = s.shape[0], K = nbr.shape[1], i, j, c
    cdef cnp.int64_t nb
    cdef double rid
    for i in range(N):
        for c in range(3):
            if leader[i]:
                rid = ref[i, c]
            else:
                rid = 0.0
                for j in range(K):
                    nb = nbr[i, j]
                    if nb >= 0:
                        rid = rid + w[i, j] * s[nb, 0, c]
            out[i, 0, c] = s[i, 1, c]
            out[i, 1, c] = s[i, 2, c]
            out[i, 2, c] = s[i, 3, c]
            out[i, 3, c] = (-g[i, 0] * s[i, 3, c] - g[i, 1] * s[i, 2, c]
                            - g[i, 2] * s[i, 1, c] + g[i, 3] * (rid - s[i, 0, c]))


def rk4_advance(state, nbr, w, ref, is_leader, gains, double dt, Py_ssize_t nsteps):
    s_arr = np.array(state, dtype=np.float64, order="C", copy=True)
    cdef double[:, :, ::1] s = s_arr
    cdef const cnp.int64_t[:, ::1] nb = np.ascontiguousarray(nbr, dtype=np.int64)
    cdef const double[:, ::1] W = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[:, ::1] R = np.ascontiguousarray(ref, dtype=np.float64)
    cdef const cnp.npy_bool[::1] L = np.ascontiguousarray(is_leader, dtype=np.bool_)
    cdef const double[:, ::1] G = np.ascontiguousarray(gains, dtype=np.float64)
    cdef Py_ssize_t N = s.shape[0], step, i, a, c
    cdef double[:, :, ::1] k1 = np.empty((N, 4, 3))
    cdef double[:, :, ::1] k2 = np.empty((N, 4, 3))
    cdef double[:, :, ::1] k3 = np.empty((N, 4, 3))
    cdef double[:, :, ::1] k4 = np.empty((N, 4, 3))
    cdef double[:, :, ::1] tmp = np.empty((N, 4, 3))
    cdef double half = 0.5 * dt, sixth = dt / 6.0
    with nogil:
        for step in range(nsteps):
            _deriv(s, nb, W, R, L, G, k1)
            for i in range(N):
                for a in range(4):
                    for c in range(3):
                        tmp[i, a, c] = s[i, a, c] + half * k1[i, a, c]
            _deriv(tmp, nb, W, R, L, G, k2)
            for i in range(N):
                for a in range(4):
                    for c in range(3):
                        tmp[i, a, c] = s[i, a, c] + half * k2[i, a, c]
            _deriv(tmp, nb, W, R, L, G, k3)
            for i in range(N):
                for a in range(4):
                    for c in range(3):
                        tmp[i, a, c] = s[i, a, c] + dt * k3[i, a, c]
            _deriv(tmp, nb, W, R, L, G, k4)
            for i in range(N):
                for a in range(4):
                    for c in range(3):
                        s[i, a, c] = s[i, a, c] + sixth * (
                            k1[i, a, c] + 2.0 * k2[i, a, c] + 2.0 * k3[i, a, c] + k4[i, a, c])
    return s_arr
