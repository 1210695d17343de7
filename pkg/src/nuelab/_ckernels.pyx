# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. See ``_pykernels`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def window_scan(a, double ca, rsum, crsum, rpt, double cpt):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] A = np.ascontiguousarray(a, dtype=np.float64)
    cdef Py_ssize_t S = A.shape[0], N = A.shape[1]
    cdef Py_ssize_t m = 0 if rsum is None else rsum.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] RS
    cdef cnp.ndarray[cnp.float64_t, ndim=1] CR
    cdef cnp.ndarray[cnp.float64_t, ndim=2] RP
    if m > 0:
        RS = np.ascontiguousarray(rsum, dtype=np.float64)
        CR = np.ascontiguousarray(crsum, dtype=np.float64)
    else:
        RS = np.zeros((1, 1, 1))
        CR = np.zeros(1)
    cdef bint has_pt = rpt is not None
    if has_pt:
        RP = np.ascontiguousarray(rpt, dtype=np.float64)
    else:
        RP = np.zeros((1, 1))
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] out = np.zeros((S, N), dtype=np.uint8)
    cdef double[::1] sr = np.zeros(max(m, 1))
    cdef Py_ssize_t s, p, k, j, i
    cdef double sa, kk
    cdef bint ok
    for s in range(S):
        for p in range(1, N + 1):
            ok = True
            sa = 0.0
            for i in range(m):
                sr[i] = 0.0
            for k in range(1, p + 1):
                j = p - k
                kk = <double>k
                sa = sa + A[s, j]
                if not (sa >= ca * kk):
                    ok = False
                    break
                for i in range(m):
                    sr[i] = sr[i] + RS[s, i, j]
                    if not (sr[i] <= CR[i] * kk):
                        ok = False
                        break
                if not ok:
                    break
                if has_pt and not (RP[s, j] <= cpt * kk):
                    ok = False
                    break
            out[s, p - 1] = 1 if ok else 0
    return out


def convolve(x, y):
    """Full linear convolution with Neumaier-compensated accumulation."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] X = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] Y = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t nx = X.shape[0], ny = Y.shape[0]
    if nx == 0 or ny == 0:
        return np.zeros(0)
    cdef Py_ssize_t n = nx + ny - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n)
    cdef Py_ssize_t p, i, lo, hi
    cdef double s, c, t, v
    for p in range(n):
        lo = p - ny + 1
        if lo < 0:
            lo = 0
        hi = p if p < nx - 1 else nx - 1
        s = 0.0
        c = 0.0
        for i in range(lo, hi + 1):
            v = X[i] * Y[p - i]
            t = s + v
            if fabs(s) >= fabs(v):
                c += (s - t) + v
            else:
                c += (v - t) + s
            s = t
        out[p] = s + c
    return out
