"""Pure NumPy weight-construction kernels (reference path).

Operates on flattened CSR-style bond arrays; the numba twin in
``_weights_numba.py`` implements the same algorithm.  ``bad`` flags
centers whose neighborhoods cannot support the requested order (too
few bonds, or reciprocal condition below the threshold).
"""

import numpy as np


def _monomial_rows(dx_scaled: np.ndarray, expo: np.ndarray) -> np.ndarray:
    """(nb, m) monomial matrix for pre-scaled separations."""
    return np.prod(dx_scaled[:, None, :] ** expo[None, :, :], axis=2)


def _selector(m: int, d: int, scale: float) -> np.ndarray:
    sel = np.zeros((m, d))
    for j in range(d):
        sel[j, j] = 1.0 / scale
    return sel


def _rcond(mat: np.ndarray) -> float:
    sv = np.linalg.svd(mat, compute_uv=False)
    return 0.0 if sv[0] == 0.0 else float(sv[-1] / sv[0])


def rk_gamma(offsets, dx, alpha, vols, expo, scales, rcond_min):
    """Reproducing-kernel weight vectors for every center.

    gamma_k = alpha_k * V_k * (M^{-1} Q_k) . selector, with the moment
    matrix M accumulated over the center's bonds.
    """
    ncent = offsets.shape[0] - 1
    nb_total, d = dx.shape
    m = expo.shape[0]
    gamma = np.zeros((nb_total, d))
    bad = np.zeros(ncent, dtype=np.int8)
    for ci in range(ncent):
        s, e = offsets[ci], offsets[ci + 1]
        if e - s < m:
            bad[ci] = 1
            continue
        sc = scales[ci]
        Q = _monomial_rows(dx[s:e] / sc, expo)
        w = alpha[s:e] * vols[s:e]
        M = (Q * w[:, None]).T @ Q
        if _rcond(M) < rcond_min:
            bad[ci] = 1
            continue
        Y = np.linalg.solve(M, _selector(m, d, sc))
        gamma[s:e] = w[:, None] * (Q @ Y)
    return gamma, bad


def gmls_gamma(offsets, dx, expo, scales, rcond_min):
    """Minimum-norm moving-least-squares weight vectors for every center.

    Solves the constrained problem (exact gradients of all basis
    polynomials, minimal Frobenius norm of the per-bond weight tensors)
    through the Schur complement of its KKT system: with the Gram
    matrix G = sum Q Q^T / |dx|^2, the bond vectors are
    gamma_k = (Q_k . G^{-1} selector) * dx_k / |dx_k|^2 contracted with
    the inverse-square geometric factor.
    """
    ncent = offsets.shape[0] - 1
    nb_total, d = dx.shape
    m = expo.shape[0]
    gamma = np.zeros((nb_total, d))
    bad = np.zeros(ncent, dtype=np.int8)
    for ci in range(ncent):
        s, e = offsets[ci], offsets[ci + 1]
        if e - s < m:
            bad[ci] = 1
            continue
        sc = scales[ci]
        Q = _monomial_rows(dx[s:e] / sc, expo)
        r2 = np.einsum("ij,ij->i", dx[s:e], dx[s:e])
        G = (Q / r2[:, None]).T @ Q
        if _rcond(G) < rcond_min:
            bad[ci] = 1
            continue
        Z = np.linalg.solve(G, _selector(m, d, sc))
        gamma[s:e] = (Q @ Z) / r2[:, None]
    return gamma, bad
