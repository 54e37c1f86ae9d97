"""Numba-compiled twins of the weight-construction kernels.

Same algorithm as ``_weights_numpy.py``; loops are explicit and run in
parallel over centers (every center writes a disjoint slice).  Only
imported when the numba backend is active.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def rk_gamma(offsets, dx, alpha, vols, expo, scales, rcond_min):
    ncent = offsets.shape[0] - 1
    nb_total = dx.shape[0]
    d = dx.shape[1]
    m = expo.shape[0]
    gamma = np.zeros((nb_total, d))
    bad = np.zeros(ncent, dtype=np.int8)
    for ci in prange(ncent):
        s, e = offsets[ci], offsets[ci + 1]
        nb = e - s
        if nb < m:
            bad[ci] = 1
            continue
        sc = scales[ci]
        Q = np.empty((nb, m))
        for k in range(nb):
            for p in range(m):
                v = 1.0
                for c in range(d):
                    ee = expo[p, c]
                    if ee > 0:
                        v *= (dx[s + k, c] / sc) ** ee
                Q[k, p] = v
        M = np.zeros((m, m))
        for k in range(nb):
            w = alpha[s + k] * vols[s + k]
            for p in range(m):
                qp = Q[k, p] * w
                for q in range(m):
                    M[p, q] += qp * Q[k, q]
        sv = np.linalg.svd(M)[1]
        if sv[0] == 0.0 or sv[m - 1] / sv[0] < rcond_min:
            bad[ci] = 1
            continue
        sel = np.zeros((m, d))
        for j in range(d):
            sel[j, j] = 1.0 / sc
        Y = np.linalg.solve(M, sel)
        for k in range(nb):
            w = alpha[s + k] * vols[s + k]
            for j in range(d):
                acc = 0.0
                for p in range(m):
                    acc += Q[k, p] * Y[p, j]
                gamma[s + k, j] = w * acc
    return gamma, bad


@njit(cache=True, parallel=True)
def gmls_gamma(offsets, dx, expo, scales, rcond_min):
    ncent = offsets.shape[0] - 1
    nb_total = dx.shape[0]
    d = dx.shape[1]
    m = expo.shape[0]
    gamma = np.zeros((nb_total, d))
    bad = np.zeros(ncent, dtype=np.int8)
    for ci in prange(ncent):
        s, e = offsets[ci], offsets[ci + 1]
        nb = e - s
        if nb < m:
            bad[ci] = 1
            continue
        sc = scales[ci]
        Q = np.empty((nb, m))
        r2 = np.empty(nb)
        for k in range(nb):
            rr = 0.0
            for c in range(d):
                rr += dx[s + k, c] * dx[s + k, c]
            r2[k] = rr
            for p in range(m):
                v = 1.0
                for c in range(d):
                    ee = expo[p, c]
                    if ee > 0:
                        v *= (dx[s + k, c] / sc) ** ee
                Q[k, p] = v
        G = np.zeros((m, m))
        for k in range(nb):
            for p in range(m):
                qp = Q[k, p] / r2[k]
                for q in range(m):
                    G[p, q] += qp * Q[k, q]
        sv = np.linalg.svd(G)[1]
        if sv[0] == 0.0 or sv[m - 1] / sv[0] < rcond_min:
            bad[ci] = 1
            continue
        sel = np.zeros((m, d))
        for j in range(d):
            sel[j, j] = 1.0 / sc
        Z = np.linalg.solve(G, sel)
        for k in range(nb):
            for j in range(d):
                acc = 0.0
                for p in range(m):
                    acc += Q[k, p] * Z[p, j]
                gamma[s + k, j] = acc / r2[k]
    return gamma, bad
