# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: FPFH histograms and greedy center selection.

Mirrors ``_kernels_py`` operation for operation.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, atan2, floor, fabs, M_PI, INFINITY

cnp.import_array()

DEF N_BINS = 11
DEF FPFH_DIM = 33


cdef inline Py_ssize_t _bin(double x) noexcept nogil:
    cdef Py_ssize_t b = <Py_ssize_t>floor(x)
    if b < 0:
        return 0
    if b > N_BINS - 1:
        return N_BINS - 1
    return b


cdef inline void _pair(const double* p1, const double* n1,
                       const double* p2, const double* n2,
                       double* f) noexcept nogil:
    cdef double dp[3]
    cdef double u[3]
    cdef double t[3]
    cdef double v[3]
    cdef double w[3]
    cdef double f4, a1, a2, vn, sgn
    cdef int c
    f[0] = 0.0
    f[1] = 0.0
    f[2] = 0.0
    for c in range(3):
        dp[c] = p2[c] - p1[c]
    f4 = sqrt(dp[0] * dp[0] + dp[1] * dp[1] + dp[2] * dp[2])
    if f4 == 0.0:
        return
    a1 = (n1[0] * dp[0] + n1[1] * dp[1] + n1[2] * dp[2]) / f4
    a2 = (n2[0] * dp[0] + n2[1] * dp[1] + n2[2] * dp[2]) / f4
    # acos is decreasing: the larger angle belongs to the smaller |cosine|
    if fabs(a1) < fabs(a2):
        for c in range(3):
            u[c] = n2[c]
            t[c] = n1[c]
            dp[c] = -dp[c]
        f[2] = -a2
    else:
        for c in range(3):
            u[c] = n1[c]
            t[c] = n2[c]
        f[2] = a1
    v[0] = dp[1] * u[2] - dp[2] * u[1]
    v[1] = dp[2] * u[0] - dp[0] * u[2]
    v[2] = dp[0] * u[1] - dp[1] * u[0]
    vn = sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if vn == 0.0:
        f[2] = 0.0
        return
    for c in range(3):
        v[c] = v[c] / vn
    w[0] = u[1] * v[2] - u[2] * v[1]
    w[1] = u[2] * v[0] - u[0] * v[2]
    w[2] = u[0] * v[1] - u[1] * v[0]
    f[1] = v[0] * t[0] + v[1] * t[1] + v[2] * t[2]
    f[0] = atan2(w[0] * t[0] + w[1] * t[1] + w[2] * t[2],
                 u[0] * t[0] + u[1] * t[1] + u[2] * t[2])


def spfh(points, normals, indptr, indices):
    cdef const double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:, ::1] N = np.ascontiguousarray(normals, dtype=np.float64)
    cdef const cnp.intp_t[::1] ptr = np.ascontiguousarray(indptr, dtype=np.intp)
    cdef const cnp.intp_t[::1] idx = np.ascontiguousarray(indices, dtype=np.intp)
    cdef Py_ssize_t n = P.shape[0]
    out = np.zeros((n, FPFH_DIM))
    cdef double[:, ::1] H = out
    cdef Py_ssize_t i, e, k, cnt
    cdef double incr
    cdef double f[3]
    with nogil:
        for i in range(n):
            cnt = ptr[i + 1] - ptr[i]
            if cnt == 0:
                continue
            incr = 100.0 / <double>cnt
            for e in range(ptr[i], ptr[i + 1]):
                k = idx[e]
                _pair(&P[i, 0], &N[i, 0], &P[k, 0], &N[k, 0], f)
                H[i, _bin(N_BINS * (f[0] + M_PI) / (2.0 * M_PI))] += incr
                H[i, N_BINS + _bin(N_BINS * (f[1] + 1.0) * 0.5)] += incr
                H[i, 2 * N_BINS + _bin(N_BINS * (f[2] + 1.0) * 0.5)] += incr
    return out


def fpfh(points, spfh_hist, indptr, indices):
    cdef const double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:, ::1] S = np.ascontiguousarray(spfh_hist, dtype=np.float64)
    cdef const cnp.intp_t[::1] ptr = np.ascontiguousarray(indptr, dtype=np.intp)
    cdef const cnp.intp_t[::1] idx = np.ascontiguousarray(indices, dtype=np.intp)
    cdef Py_ssize_t n = P.shape[0]
    out = np.zeros((n, FPFH_DIM))
    cdef double[:, ::1] F = out
    cdef Py_ssize_t i, e, k, j, g
    cdef double d2, dx, dy, dz, s, factor
    with nogil:
        for i in range(n):
            for e in range(ptr[i], ptr[i + 1]):
                k = idx[e]
                dx = P[k, 0] - P[i, 0]
                dy = P[k, 1] - P[i, 1]
                dz = P[k, 2] - P[i, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 == 0.0:
                    continue
                for j in range(FPFH_DIM):
                    F[i, j] += S[k, j] / d2
            for g in range(3):
                s = 0.0
                for j in range(N_BINS):
                    s = s + F[i, g * N_BINS + j]
                if s != 0.0:
                    factor = 100.0 / s
                    for j in range(N_BINS):
                        F[i, g * N_BINS + j] *= factor
            for j in range(FPFH_DIM):
                F[i, j] += S[i, j]
    return out


def greedy_select(points, init, Py_ssize_t s_max, bint use_min):
    cdef const double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64)
    cdef const cnp.intp_t[::1] start = np.ascontiguousarray(init, dtype=np.intp)
    cdef Py_ssize_t n = P.shape[0]
    order_arr = np.empty(s_max, dtype=np.intp)
    cdef cnp.intp_t[::1] order = order_arr
    agg_arr = np.full(n, INFINITY) if use_min else np.zeros(n)
    cdef double[::1] agg = agg_arr
    sel_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] sel = sel_arr
    cdef Py_ssize_t count = 0, a, i, best, m = start.shape[0]
    cdef double dx, dy, dz, d, bestv
    with nogil:
        a = 0
        while count < s_max:
            if a < m:
                best = start[a]
                a += 1
            else:
                best = -1
                bestv = -INFINITY
                for i in range(n):
                    if sel[i] == 0 and (best < 0 or agg[i] > bestv):
                        best = i
                        bestv = agg[i]
            order[count] = best
            count += 1
            sel[best] = 1
            for i in range(n):
                dx = P[i, 0] - P[best, 0]
                dy = P[i, 1] - P[best, 1]
                dz = P[i, 2] - P[best, 2]
                d = sqrt(dx * dx + dy * dy + dz * dz)
                if use_min:
                    if d < agg[i]:
                        agg[i] = d
                else:
                    agg[i] = agg[i] + d
    return order_arr
