# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: ECF grid evaluation and observation-shifted kernel sums.

Phases exp(i k ds x) are advanced by complex rotation and re-anchored with a
fresh exp every _ANCHOR steps to keep the accumulated rounding drift below
~1e-13 over the longest grids used.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin
from libc.stdlib cimport free, malloc

cnp.import_array()

BACKEND = "compiled"

cdef int _ANCHOR = 256


def ecf_grid(const double[::1] x, const double[::1] xw, Py_ssize_t m, double ds):
    """ECF and truncated-derivative sums on the grid t_k = k*ds, k=0..m-1."""
    cdef Py_ssize_t n = x.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] phi = np.empty(m, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] dphi = np.empty(m, dtype=np.complex128)
    cdef double* pr = <double*> malloc(n * sizeof(double))
    cdef double* pi = <double*> malloc(n * sizeof(double))
    cdef double* zr = <double*> malloc(n * sizeof(double))
    cdef double* zi = <double*> malloc(n * sizeof(double))
    if pr == NULL or pi == NULL or zr == NULL or zi == NULL:
        free(pr); free(pi); free(zr); free(zi)
        raise MemoryError()
    cdef Py_ssize_t j, k
    cdef double sr, si, dr, di, tr, a, inv_n = 1.0 / n
    try:
        for j in range(n):
            pr[j] = 1.0
            pi[j] = 0.0
            zr[j] = cos(ds * x[j])
            zi[j] = sin(ds * x[j])
        for k in range(m):
            if k > 0 and k % _ANCHOR == 0:
                for j in range(n):
                    a = (k * ds) * x[j]
                    pr[j] = cos(a)
                    pi[j] = sin(a)
            sr = 0.0; si = 0.0; dr = 0.0; di = 0.0
            for j in range(n):
                sr += pr[j]
                si += pi[j]
                dr += xw[j] * pr[j]
                di += xw[j] * pi[j]
            phi[k] = (sr + 1j * si) * inv_n
            dphi[k] = (-di + 1j * dr) * inv_n
            for j in range(n):
                tr = pr[j] * zr[j] - pi[j] * zi[j]
                pi[j] = pr[j] * zi[j] + pi[j] * zr[j]
                pr[j] = tr
    finally:
        free(pr); free(pi); free(zr); free(zi)
    return phi, dphi


def kn_dot(const double[::1] x, double ds, cnp.complex128_t[:, ::1] C):
    """W[j, l] = sum_k Re(exp(i k ds x_j) * C[k, l]) for C of shape (m, N)."""
    cdef Py_ssize_t m = C.shape[0]
    cdef Py_ssize_t N = C.shape[1]
    cdef Py_ssize_t n = x.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] W = np.zeros((n, N), dtype=np.float64)
    cdef double[:, ::1] Wv = W
    cdef double* cr = <double*> malloc(m * N * sizeof(double))
    cdef double* ci = <double*> malloc(m * N * sizeof(double))
    cdef double* acc = <double*> malloc(N * sizeof(double))
    if cr == NULL or ci == NULL or acc == NULL:
        free(cr); free(ci); free(acc)
        raise MemoryError()
    cdef Py_ssize_t j, k, l
    cdef double prj, pij, zrj, zij, a, t
    try:
        for k in range(m):
            for l in range(N):
                cr[k * N + l] = C[k, l].real
                ci[k * N + l] = C[k, l].imag
        for j in range(n):
            prj = 1.0
            pij = 0.0
            zrj = cos(ds * x[j])
            zij = sin(ds * x[j])
            for l in range(N):
                acc[l] = 0.0
            for k in range(m):
                if k > 0 and k % _ANCHOR == 0:
                    a = (k * ds) * x[j]
                    prj = cos(a)
                    pij = sin(a)
                for l in range(N):
                    acc[l] += prj * cr[k * N + l] - pij * ci[k * N + l]
                t = prj * zrj - pij * zij
                pij = prj * zij + pij * zrj
                prj = t
            for l in range(N):
                Wv[j, l] = acc[l]
    finally:
        free(cr); free(ci); free(acc)
    return W
