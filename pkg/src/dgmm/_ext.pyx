# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Same contracts as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, exp, INFINITY

cnp.import_array()

cdef double LOG_2PI = 1.8378770664093453


def mvn_logpdf(X, means, chols):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] mu = np.ascontiguousarray(means, dtype=np.float64)
    cdef double[:, :, ::1] L = np.ascontiguousarray(chols, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], K = mu.shape[0]
    cdef Py_ssize_t i, k, a, c
    cdef double logdet, maha, s
    out_arr = np.empty((n, K), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] w = np.empty(d, dtype=np.float64)
    with nogil:
        for k in range(K):
            logdet = 0.0
            for a in range(d):
                logdet += log(L[k, a, a])
            logdet *= 2.0
            for i in range(n):
                maha = 0.0
                for a in range(d):
                    s = x[i, a] - mu[k, a]
                    for c in range(a):
                        s -= L[k, a, c] * w[c]
                    w[a] = s / L[k, a, a]
                    maha += w[a] * w[a]
                out[i, k] = -0.5 * (d * LOG_2PI + logdet + maha)
    return out_arr


def logsumexp_rows(A):
    cdef double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], K = a.shape[1], i, k
    cdef double m, s
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            m = -INFINITY
            for k in range(K):
                if a[i, k] > m:
                    m = a[i, k]
            if m == -INFINITY:
                out[i] = -INFINITY
                continue
            s = 0.0
            for k in range(K):
                s += exp(a[i, k] - m)
            out[i] = m + log(s)
    return out_arr


def categorical(logw, u):
    cdef double[:, ::1] a = np.ascontiguousarray(logw, dtype=np.float64)
    cdef double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], K = a.shape[1], i, k, j
    cdef double m, total, thresh, c
    out_arr = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] out = out_arr
    cdef double[::1] w = np.empty(K, dtype=np.float64)
    with nogil:
        for i in range(n):
            m = -INFINITY
            for k in range(K):
                if a[i, k] > m:
                    m = a[i, k]
            total = 0.0
            for k in range(K):
                w[k] = exp(a[i, k] - m)
                total += w[k]
            thresh = uu[i] * total
            c = 0.0
            j = K - 1
            for k in range(K):
                c += w[k]
                if c > thresh:
                    j = k
                    break
            out[i] = j
    return out_arr


def affine_gather(z, A, b, L, idx, eps):
    cdef double[:, ::1] zz = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[:, :, ::1] AA = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, ::1] bb = np.ascontiguousarray(b, dtype=np.float64)
    cdef double[:, :, ::1] LL = np.ascontiguousarray(L, dtype=np.float64)
    cdef Py_ssize_t[::1] ii = np.ascontiguousarray(idx, dtype=np.intp)
    cdef double[:, :, ::1] ee = np.ascontiguousarray(eps, dtype=np.float64)
    cdef Py_ssize_t n = zz.shape[0], d = zz.shape[1]
    cdef Py_ssize_t r = AA.shape[1], M = ee.shape[1]
    cdef Py_ssize_t i, t, a, c, m
    cdef double s
    out_arr = np.empty((n, M, r), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double[::1] mean = np.empty(r, dtype=np.float64)
    with nogil:
        for i in range(n):
            t = ii[i]
            for a in range(r):
                s = bb[t, a]
                for c in range(d):
                    s += AA[t, a, c] * zz[i, c]
                mean[a] = s
            for m in range(M):
                for a in range(r):
                    s = mean[a]
                    for c in range(a + 1):
                        s += LL[t, a, c] * ee[i, m, c]
                    out[i, m, a] = s
    return out_arr


def affine_moments(z, A, b, L, idx, eps):
    """Monte Carlo moments of the draws ``affine_gather`` would return.

    Ez[i] = mean_m draw[i, m]; Ezz[i] = mean_m draw[i, m] draw[i, m]^T.
    """
    cdef double[:, ::1] zz = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[:, :, ::1] AA = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, ::1] bb = np.ascontiguousarray(b, dtype=np.float64)
    cdef double[:, :, ::1] LL = np.ascontiguousarray(L, dtype=np.float64)
    cdef Py_ssize_t[::1] ii = np.ascontiguousarray(idx, dtype=np.intp)
    cdef double[:, :, ::1] ee = np.ascontiguousarray(eps, dtype=np.float64)
    cdef Py_ssize_t n = zz.shape[0], d = zz.shape[1]
    cdef Py_ssize_t r = AA.shape[1], M = ee.shape[1]
    cdef Py_ssize_t i, t, a, c, m
    cdef double s
    ez_arr = np.zeros((n, r), dtype=np.float64)
    ezz_arr = np.zeros((n, r, r), dtype=np.float64)
    cdef double[:, ::1] ez = ez_arr
    cdef double[:, :, ::1] ezz = ezz_arr
    cdef double[::1] mean = np.empty(r, dtype=np.float64)
    cdef double[::1] draw = np.empty(r, dtype=np.float64)
    cdef double inv_m = 1.0 / M
    with nogil:
        for i in range(n):
            t = ii[i]
            for a in range(r):
                s = bb[t, a]
                for c in range(d):
                    s += AA[t, a, c] * zz[i, c]
                mean[a] = s
            for m in range(M):
                for a in range(r):
                    s = mean[a]
                    for c in range(a + 1):
                        s += LL[t, a, c] * ee[i, m, c]
                    draw[a] = s
                for a in range(r):
                    ez[i, a] += draw[a] * inv_m
                    for c in range(a + 1):
                        ezz[i, a, c] += draw[a] * draw[c] * inv_m
            for a in range(r):
                for c in range(a):
                    ezz[i, c, a] = ezz[i, a, c]
    return ez_arr, ezz_arr


def affine_moments_stats(z, A, b, L, idx, ebar, F):
    """Moments of ``rho + L e`` from sufficient statistics of the replicates.

    ``ebar[i]`` is the replicate mean of the standard normal draws and
    ``F[i] F[i]^T`` (F of shape (r, q)) their average outer product about
    the mean, so that Ez = rho + L ebar and Ezz = Ez Ez^T + (L F)(L F)^T.
    """
    cdef double[:, ::1] zz = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[:, :, ::1] AA = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, ::1] bb = np.ascontiguousarray(b, dtype=np.float64)
    cdef double[:, :, ::1] LL = np.ascontiguousarray(L, dtype=np.float64)
    cdef Py_ssize_t[::1] ii = np.ascontiguousarray(idx, dtype=np.intp)
    cdef double[:, ::1] eb = np.ascontiguousarray(ebar, dtype=np.float64)
    cdef double[:, :, ::1] FF = np.ascontiguousarray(F, dtype=np.float64)
    cdef Py_ssize_t n = zz.shape[0], d = zz.shape[1], r = AA.shape[1], q = FF.shape[2]
    cdef Py_ssize_t i, t, a, c, e
    cdef double s
    ez_arr = np.empty((n, r), dtype=np.float64)
    ezz_arr = np.empty((n, r, r), dtype=np.float64)
    cdef double[:, ::1] ez = ez_arr
    cdef double[:, :, ::1] ezz = ezz_arr
    cdef double[:, ::1] G = np.empty((r, q), dtype=np.float64)
    with nogil:
        for i in range(n):
            t = ii[i]
            for a in range(r):
                s = bb[t, a]
                for c in range(d):
                    s += AA[t, a, c] * zz[i, c]
                for c in range(a + 1):
                    s += LL[t, a, c] * eb[i, c]
                ez[i, a] = s
                for e in range(q):
                    s = 0.0
                    for c in range(a + 1):
                        s += LL[t, a, c] * FF[i, c, e]
                    G[a, e] = s
            for a in range(r):
                for c in range(a + 1):
                    s = ez[i, a] * ez[i, c]
                    for e in range(q):
                        s += G[a, e] * G[c, e]
                    ezz[i, a, c] = s
                    ezz[i, c, a] = s
    return ez_arr, ezz_arr
