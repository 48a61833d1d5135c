# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: per-frequency symbol inversion/application and pairwise sums."""
import numpy as np
cimport cython
from cython.parallel cimport prange
from libc.math cimport fabs
from libc.stdlib cimport malloc, free


def pairwise_sum(values):
    cdef double[::1] a = np.ascontiguousarray(values, dtype=np.float64).ravel()
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t size = 1, half, i
    if n == 0:
        return 0.0
    while size < n:
        size *= 2
    cdef double[::1] buf = np.zeros(size)
    buf[:n] = a
    while size > 1:
        half = size // 2
        for i in range(half):
            buf[i] = buf[i] + buf[i + half]
        size = half
    return float(buf[0])


cdef void _lu_inverse(const double* s, double* inv, double* det_out, Py_ssize_t N,
                      double* lu, Py_ssize_t* piv) noexcept nogil:
    cdef Py_ssize_t i, j, k, p
    cdef double m, t, det = 1.0
    for i in range(N * N):
        lu[i] = s[i]
    for i in range(N):
        piv[i] = i
    for k in range(N):
        p = k
        m = fabs(lu[k * N + k])
        for i in range(k + 1, N):
            if fabs(lu[i * N + k]) > m:
                m = fabs(lu[i * N + k])
                p = i
        if m == 0.0:
            det_out[0] = 0.0
            for i in range(N * N):
                inv[i] = 0.0
            return
        if p != k:
            for j in range(N):
                t = lu[k * N + j]
                lu[k * N + j] = lu[p * N + j]
                lu[p * N + j] = t
            i = piv[k]
            piv[k] = piv[p]
            piv[p] = i
            det = -det
        det *= lu[k * N + k]
        for i in range(k + 1, N):
            lu[i * N + k] /= lu[k * N + k]
            for j in range(k + 1, N):
                lu[i * N + j] -= lu[i * N + k] * lu[k * N + j]
    det_out[0] = det
    # solve LU x = P e_c for each column c
    for j in range(N):
        for i in range(N):
            inv[i * N + j] = 1.0 if piv[i] == j else 0.0
        for i in range(N):
            t = inv[i * N + j]
            for k in range(i):
                t -= lu[i * N + k] * inv[k * N + j]
            inv[i * N + j] = t
        for i in range(N - 1, -1, -1):
            t = inv[i * N + j]
            for k in range(i + 1, N):
                t -= lu[i * N + k] * inv[k * N + j]
            inv[i * N + j] = t / lu[i * N + i]


def invert_symbols(S, int threads=1):
    cdef double[:, :, ::1] s = np.ascontiguousarray(S, dtype=np.float64)
    cdef Py_ssize_t K = s.shape[0], N = s.shape[1], k
    inv_arr = np.zeros((K, N, N))
    det_arr = np.zeros(K)
    cdef double[:, :, ::1] inv = inv_arr
    cdef double[::1] det = det_arr
    cdef double* lu
    cdef Py_ssize_t* piv
    if K == 0:
        return inv_arr, det_arr
    with nogil:
        for k in prange(K, num_threads=max(threads, 1), schedule="static"):
            lu = <double*> malloc(N * N * sizeof(double))
            piv = <Py_ssize_t*> malloc(N * sizeof(Py_ssize_t))
            _lu_inverse(&s[k, 0, 0], &inv[k, 0, 0], &det[k], N, lu, piv)
            free(lu)
            free(piv)
    return inv_arr, det_arr


def apply_symbols(Sinv, rhs, scale=None, int threads=1):
    cdef double[:, :, ::1] m = np.ascontiguousarray(Sinv, dtype=np.float64)
    cdef double complex[:, ::1] r = np.ascontiguousarray(rhs, dtype=np.complex128)
    cdef Py_ssize_t K = m.shape[0], N = m.shape[1], k, a, b
    out_arr = np.zeros((K, N), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    cdef double complex[::1] sc
    cdef bint has_scale = scale is not None
    cdef double complex acc
    if has_scale:
        sc = np.ascontiguousarray(scale, dtype=np.complex128)
    else:
        sc = np.ones(1, dtype=np.complex128)
    with nogil:
        for k in prange(K, num_threads=max(threads, 1), schedule="static"):
            for a in range(N):
                acc = 0
                for b in range(N):
                    acc = acc + m[k, a, b] * r[k, b]
                if has_scale:
                    acc = acc * sc[k]
                out[k, a] = acc
    return out_arr
