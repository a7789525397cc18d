"""Pure-Python versions of the compiled kernels.

Every loop here mirrors ``_ckernels.pyx`` operation for operation so both
backends return bit-identical floats. Do not vectorise: numpy reductions
use pairwise summation and would change the rounding.
"""

from __future__ import annotations

import math

import numpy as np


def shaped_argmax(utility, risk, lam):
    n = len(utility)
    if n == 0:
        raise ValueError("empty action table")
    lam = float(lam)
    best = 0
    bv = float(utility[0]) - lam * float(risk[0])
    for i in range(1, n):
        v = float(utility[i]) - lam * float(risk[i])
        if v > bv:
            bv = v
            best = i
    return best


def _distance(query, row, scales, numeric):
    total = 0.0
    for j in range(len(query)):
        q = float(query[j])
        c = float(row[j])
        qn = math.isnan(q)
        cn = math.isnan(c)
        if qn or cn:
            if not (qn and cn):
                total = total + 1.0
        elif numeric[j]:
            total = total + abs(q - c) / float(scales[j])
        elif q != c:
            total = total + 1.0
    return total


def edit_distances(query, cands, scales, numeric):
    return np.array([_distance(query, row, scales, numeric) for row in cands], dtype=np.float64)


def nearest(query, cands, scales, numeric):
    best = -1
    bd = 0.0
    for i, row in enumerate(cands):
        total = _distance(query, row, scales, numeric)
        if best < 0 or total < bd:
            bd = total
            best = i
    return best, bd


def dykstra(x0, lo, hi, normals, offsets, tol, max_sweeps):
    d = len(x0)
    m = len(normals)
    x = [float(v) for v in x0]
    lo = [float(v) for v in lo]
    hi = [float(v) for v in hi]
    normals = [[float(v) for v in row] for row in normals]
    offsets = [float(v) for v in offsets]
    p = [[0.0] * d for _ in range(m + 1)]
    norms2 = []
    for j in range(m):
        nn = 0.0
        for i in range(d):
            nn = nn + normals[j][i] * normals[j][i]
        norms2.append(nn)

    y = [0.0] * d
    for sweep in range(1, max_sweeps + 1):
        inc_change = 0.0
        xprev = list(x)
        for j in range(m):
            nj = normals[j]
            pj = p[j]
            dot = 0.0
            for i in range(d):
                y[i] = x[i] + pj[i]
                dot = dot + nj[i] * y[i]
            viol = dot - offsets[j]
            for i in range(d):
                if viol > 0.0:
                    xv = y[i] - viol / norms2[j] * nj[i]
                else:
                    xv = y[i]
                diff = (y[i] - xv) - pj[i]
                inc_change = inc_change + diff * diff
                pj[i] = y[i] - xv
                x[i] = xv
        pb = p[m]
        for i in range(d):
            yv = x[i] + pb[i]
            xv = yv
            if xv < lo[i]:
                xv = lo[i]
            elif xv > hi[i]:
                xv = hi[i]
            diff = (yv - xv) - pb[i]
            inc_change = inc_change + diff * diff
            pb[i] = yv - xv
            x[i] = xv
        change = 0.0
        for i in range(d):
            change = change + (x[i] - xprev[i]) * (x[i] - xprev[i])
        if sweep > 1 and math.sqrt(change) <= tol and math.sqrt(inc_change) <= tol:
            return np.array(x, dtype=np.float64), sweep, True
    return np.array(x, dtype=np.float64), max_sweeps, False
