# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Must stay bit-identical to ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, isnan, sqrt

cnp.import_array()


def shaped_argmax(const double[::1] utility, const double[::1] risk, double lam):
    cdef Py_ssize_t n = utility.shape[0]
    cdef Py_ssize_t i, best = 0
    cdef double v, bv
    if n == 0:
        raise ValueError("empty action table")
    bv = utility[0] - lam * risk[0]
    for i in range(1, n):
        v = utility[i] - lam * risk[i]
        if v > bv:
            bv = v
            best = i
    return best


def edit_distances(const double[::1] query, const double[:, ::1] cands,
                   const double[::1] scales, const signed char[::1] numeric):
    cdef Py_ssize_t m = cands.shape[0]
    cdef Py_ssize_t f = cands.shape[1]
    cdef Py_ssize_t i, j
    cdef double total, q, c
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(m):
        total = 0.0
        for j in range(f):
            q = query[j]
            c = cands[i, j]
            if isnan(q) or isnan(c):
                if not (isnan(q) and isnan(c)):
                    total = total + 1.0
            elif numeric[j]:
                total = total + fabs(q - c) / scales[j]
            elif q != c:
                total = total + 1.0
        o[i] = total
    return out


def nearest(const double[::1] query, const double[:, ::1] cands,
            const double[::1] scales, const signed char[::1] numeric):
    """Index of the first candidate at minimum distance, and that distance."""
    cdef Py_ssize_t m = cands.shape[0]
    cdef Py_ssize_t f = cands.shape[1]
    cdef Py_ssize_t i, j, best = -1
    cdef double total, q, c, bd = 0.0
    for i in range(m):
        total = 0.0
        for j in range(f):
            q = query[j]
            c = cands[i, j]
            if isnan(q) or isnan(c):
                if not (isnan(q) and isnan(c)):
                    total = total + 1.0
            elif numeric[j]:
                total = total + fabs(q - c) / scales[j]
            elif q != c:
                total = total + 1.0
        if best < 0 or total < bd:
            bd = total
            best = i
    return best, bd


def dykstra(const double[::1] x0, const double[::1] lo, const double[::1] hi,
            const double[:, ::1] normals, const double[::1] offsets,
            double tol, Py_ssize_t max_sweeps):
    """Dykstra's alternating projections onto box ∩ halfspaces.

    Halfspaces are visited first and the box last, so the returned point lies
    inside the box exactly. Returns ``(x, sweeps, converged)``.
    """
    cdef Py_ssize_t d = x0.shape[0]
    cdef Py_ssize_t m = normals.shape[0]
    cdef Py_ssize_t i, j, sweep
    cdef double dot, nn, viol, change, inc_change, yv, xv, diff

    x_arr = np.array(x0, dtype=np.float64)
    cdef double[::1] x = x_arr
    cdef double[::1] xprev = np.empty(d, dtype=np.float64)
    cdef double[:, ::1] p = np.zeros((m + 1, d), dtype=np.float64)
    cdef double[::1] y = np.empty(d, dtype=np.float64)
    cdef double[::1] norms2 = np.empty(m if m > 0 else 1, dtype=np.float64)

    for j in range(m):
        nn = 0.0
        for i in range(d):
            nn = nn + normals[j, i] * normals[j, i]
        norms2[j] = nn

    for sweep in range(1, max_sweeps + 1):
        inc_change = 0.0
        for i in range(d):
            xprev[i] = x[i]
        for j in range(m):
            dot = 0.0
            for i in range(d):
                y[i] = x[i] + p[j, i]
                dot = dot + normals[j, i] * y[i]
            viol = dot - offsets[j]
            for i in range(d):
                if viol > 0.0:
                    xv = y[i] - viol / norms2[j] * normals[j, i]
                else:
                    xv = y[i]
                diff = (y[i] - xv) - p[j, i]
                inc_change = inc_change + diff * diff
                p[j, i] = y[i] - xv
                x[i] = xv
        for i in range(d):
            yv = x[i] + p[m, i]
            xv = yv
            if xv < lo[i]:
                xv = lo[i]
            elif xv > hi[i]:
                xv = hi[i]
            diff = (yv - xv) - p[m, i]
            inc_change = inc_change + diff * diff
            p[m, i] = yv - xv
            x[i] = xv
        change = 0.0
        for i in range(d):
            change = change + (x[i] - xprev[i]) * (x[i] - xprev[i])
        if sweep > 1 and sqrt(change) <= tol and sqrt(inc_change) <= tol:
            return x_arr, sweep, True
    return x_arr, max_sweeps, False
