"""Numba kernels for the sequential recursions that dominate runtime.

Everything here is pure float64 array code with no Python objects, so the
kernels compile with ``cache=True`` / ``nogil=True`` and the surrounding
modules stay plain numpy.  Dense validation oracles in the test suite do
NOT go through this module; they use independent numpy/scipy code paths.
"""
from __future__ import annotations

import numpy as np
from numba import njit

LOG_2PI = 1.8378770664093453


@njit(cache=True, nogil=True)
def dl_drive(gamma, x, z, simulate, var_floor):
    """Durbin-Levinson innovations drive over a unit-variance ACF.

    One recursion serves both directions:

    * ``simulate=False``: ``x`` holds data; accumulates
      ``logdet = sum_t log v_t`` and ``quad = sum_t e_t^2 / v_t`` for the
      correlation matrix (unit scale), where ``e_t``/``v_t`` are the
      one-step prediction errors/variances.
    * ``simulate=True``: ``z`` holds iid standard normals; ``x`` is
      filled with a draw from N(0, Gamma).

    Returns ``(logdet, quad, status)``; ``status`` is -1 on success, else
    the step index at which the innovation variance fell below
    ``var_floor``.
    """
    n = x.shape[0]
    a = np.zeros(n)
    a_prev = np.zeros(n)
    v = gamma[0]
    if v <= var_floor:
        return 0.0, 0.0, 0
    if simulate:
        x[0] = np.sqrt(v) * z[0]
    e = x[0]
    logdet = np.log(v)
    quad = e * e / v
    for t in range(1, n):
        # reflection coefficient for order t from the order t-1 predictor
        num = gamma[t]
        for j in range(1, t):
            num -= a[j - 1] * gamma[t - j]
        r = num / v
        for j in range(t - 1):
            a_prev[j] = a[j]
        for j in range(t - 1):
            a[j] = a_prev[j] - r * a_prev[t - 2 - j]
        a[t - 1] = r
        v = v * (1.0 - r * r)
        if v <= var_floor:
            return logdet, quad, t
        pred = 0.0
        for j in range(t):
            pred += a[j] * x[t - 1 - j]
        if simulate:
            x[t] = pred + np.sqrt(v) * z[t]
        e = x[t] - pred
        logdet += np.log(v)
        quad += e * e / v
    return logdet, quad, -1


@njit(cache=True, nogil=True)
def band_eliminate(W, d, b, L):
    """Symmetric banded Gaussian elimination with an exact flop counter.

    ``W`` is a full (two-sided) band working array of shape
    ``(2b+1, d+b)`` holding ``A[i+o, i]`` at ``W[b+o, i]`` for
    ``-b <= o <= b``, zero-padded past the matrix edge.  For every pivot
    column the trailing update runs over the complete ``b x b`` block:
    mirror entries are written explicitly and edge iterations land in the
    zero padding, so the loop body is branch-free and the number of
    multiply-add flops executed (and counted) is exactly ``d * b**2``.
    Square roots and divisions are excluded from the count.

    The Cholesky factor is extracted into ``L`` of shape ``(b+1, d)``
    with ``L[o, i] = chol(A)[i+o, i]``.  Returns ``(flops, fail)`` where
    ``fail`` is -1 on success, else the column with a nonpositive pivot.
    """
    flops = 0
    for j in range(d):
        piv = W[b, j]
        if not (piv > 0.0) or not np.isfinite(piv):
            return flops, j
        s = np.sqrt(piv)
        L[0, j] = s
        for q in range(1, b + 1):
            L[q, j] = W[b + q, j] / s
        for q in range(1, b + 1):
            mq = W[b + q, j] / piv
            for p in range(1, b + 1):
                W[b + q - p, j + p] -= mq * W[b + p, j]
                flops += 1
    return flops, -1


@njit(cache=True, nogil=True)
def band_forward(L, rhs, out):
    """Solve L y = rhs for a banded lower-triangular factor."""
    b = L.shape[0] - 1
    d = rhs.shape[0]
    for i in range(d):
        s = rhs[i]
        qmax = min(b, i)
        for q in range(1, qmax + 1):
            s -= L[q, i - q] * out[i - q]
        out[i] = s / L[0, i]


@njit(cache=True, nogil=True)
def band_back(L, rhs, out):
    """Solve L^T x = rhs for a banded lower-triangular factor."""
    b = L.shape[0] - 1
    d = rhs.shape[0]
    for i in range(d - 1, -1, -1):
        s = rhs[i]
        qmax = min(b, d - 1 - i)
        for q in range(1, qmax + 1):
            s -= L[q, i] * out[i + q]
        out[i] = s / L[0, i]


@njit(cache=True, nogil=True)
def band_partial_inverse(L, S):
    """Band of the inverse of Q = L L^T (marginal variances and friends).

    Fills ``S`` (same layout as ``L``) with ``S[o, i] = (Q^{-1})[i+o, i]``
    for ``0 <= o <= b``.  Runs the classic recursion

        Sigma_{i,j} = delta_{ij}/L_ii^2 - (1/L_ii) sum_{q} L_{i+q,i} Sigma_{i+q,j}

    backwards over columns; the in-band entries close under the recursion
    so no fill outside the band is ever needed.
    """
    b = L.shape[0] - 1
    d = L.shape[1]
    for i in range(d - 1, -1, -1):
        linv = 1.0 / L[0, i]
        lmax = min(b, d - 1 - i)
        for l in range(lmax, -1, -1):
            s = 0.0
            for q in range(1, lmax + 1):
                if q >= l:
                    s += L[q, i] * S[q - l, i + l]
                else:
                    s += L[q, i] * S[l - q, i + q]
            val = -linv * s
            if l == 0:
                val += linv * linv
            S[l, i] = val
