# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the pure-Python kernels in ``_pure``.

``maximin_order`` must return bit-identical orderings (same tie rules on
the same distance matrix); ``asls_baselines`` solves the same pentadiagonal
system with an explicit LDL' factorisation instead of LAPACK.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

IMPLEMENTATION = "cython"


def maximin_order(cnp.ndarray[cnp.float64_t, ndim=2] dist, Py_ssize_t m):
    cdef Py_ssize_t n = dist.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples")
    if m < 1 or m > n:
        raise ValueError(f"m={m} out of range for n={n}")

    cdef cnp.ndarray[cnp.int64_t, ndim=1] order = np.empty(m, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mind = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] d = np.ascontiguousarray(dist)
    cdef double[::1] md = mind
    cdef Py_ssize_t i, j, i0 = 0, j0 = 1, nxt, k
    cdef double best = -1.0, v

    for i in range(n):
        for j in range(i + 1, n):
            v = d[i, j]
            if v > best:
                best = v
                i0 = i
                j0 = j
    if not best > 0.0:
        raise ValueError("all pairwise distances are zero")

    order[0] = i0
    if m == 1:
        return order
    order[1] = j0
    for i in range(n):
        v = d[i0, i]
        if d[j0, i] < v:
            v = d[j0, i]
        md[i] = v
    md[i0] = -1.0
    md[j0] = -1.0

    for k in range(2, m):
        nxt = 0
        best = md[0]
        for i in range(1, n):
            if md[i] > best:
                best = md[i]
                nxt = i
        order[k] = nxt
        for i in range(n):
            if d[nxt, i] < md[i]:
                md[i] = d[nxt, i]
        md[nxt] = -1.0
    return order


def asls_baselines(cnp.ndarray[cnp.float64_t, ndim=2] X, double lam,
                   double p_asym, int iters):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t p = X.shape[1]
    if p < 5:
        raise ValueError("need at least 5 points for second differences")

    cdef cnp.ndarray[cnp.float64_t, ndim=2] Z = np.empty((n, p), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] buf = np.empty(6 * p, dtype=np.float64)
    cdef double[:, ::1] Xv = np.ascontiguousarray(X)
    cdef double[:, ::1] Zv = Z
    cdef double[::1] w = buf[:p]
    cdef double[::1] dd = buf[p:2 * p]      # D of the LDL' factorisation
    cdef double[::1] l1 = buf[2 * p:3 * p]  # first subdiagonal of L
    cdef double[::1] l2 = buf[3 * p:4 * p]  # second subdiagonal of L
    cdef double[::1] z = buf[4 * p:5 * p]
    cdef double[::1] a1 = buf[5 * p:6 * p]
    cdef Py_ssize_t i, r, it
    cdef double a0, s1, s2

    # constant off-diagonal bands of lam * D2'D2
    for i in range(p):
        a1[i] = -4.0 * lam
    a1[1] = -2.0 * lam
    a1[p - 1] = -2.0 * lam
    s2 = lam  # second superdiagonal is lam everywhere

    for r in range(n):
        for i in range(p):
            w[i] = 1.0
        for it in range(iters):
            # factorise A = L D L' where A = diag(w) + lam * D2'D2
            for i in range(p):
                if i == 0 or i == p - 1:
                    a0 = lam + w[i]
                elif i == 1 or i == p - 2:
                    a0 = 5.0 * lam + w[i]
                else:
                    a0 = 6.0 * lam + w[i]
                if i >= 2:
                    l2[i] = s2 / dd[i - 2]
                    s1 = a1[i] - l2[i] * l1[i - 1] * dd[i - 2]
                    l1[i] = s1 / dd[i - 1]
                    dd[i] = a0 - l1[i] * l1[i] * dd[i - 1] - l2[i] * l2[i] * dd[i - 2]
                elif i == 1:
                    l1[1] = a1[1] / dd[0]
                    dd[1] = a0 - l1[1] * l1[1] * dd[0]
                else:
                    dd[0] = a0
            # forward solve L y = w * x
            z[0] = w[0] * Xv[r, 0]
            z[1] = w[1] * Xv[r, 1] - l1[1] * z[0]
            for i in range(2, p):
                z[i] = w[i] * Xv[r, i] - l1[i] * z[i - 1] - l2[i] * z[i - 2]
            # diagonal and backward solve L' z = y
            for i in range(p):
                z[i] = z[i] / dd[i]
            z[p - 2] = z[p - 2] - l1[p - 1] * z[p - 1]
            for i in range(p - 3, -1, -1):
                z[i] = z[i] - l1[i + 1] * z[i + 1] - l2[i + 2] * z[i + 2]
            # asymmetric reweighting
            for i in range(p):
                if Xv[r, i] > z[i]:
                    w[i] = p_asym
                else:
                    w[i] = 1.0 - p_asym
        for i in range(p):
            Zv[r, i] = z[i]
    return Z
