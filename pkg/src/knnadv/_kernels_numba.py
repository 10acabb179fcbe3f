"""Numba @njit kernel implementations (default backend)."""

import numpy as np
from numba import njit, prange

from knnadv import _kernels_numpy

# full distance matrices are memory-bound; the numpy/BLAS version is kept
sqdist_matrix = _kernels_numpy.sqdist_matrix


_CHUNK = 256


@njit(cache=True, parallel=True)
def _select_topk(D, k):
    """Per row: the k smallest entries of D, sorted; equal values keep
    ascending column order (strict-less insertion)."""
    nq, n = D.shape
    idx_out = np.empty((nq, k), dtype=np.int64)
    d_out = np.empty((nq, k), dtype=np.float64)
    for q in prange(nq):
        bd = np.full(k, np.inf)
        bi = np.full(k, -1, dtype=np.int64)
        for i in range(n):
            acc = D[q, i]
            if acc < bd[k - 1]:
                pos = k - 1
                while pos > 0 and acc < bd[pos - 1]:
                    bd[pos] = bd[pos - 1]
                    bi[pos] = bi[pos - 1]
                    pos -= 1
                bd[pos] = acc
                bi[pos] = i
        idx_out[q] = bi
        d_out[q] = bd
    return idx_out, d_out


def topk_sqdist(Q, X, k):
    """k smallest squared distances per query, sorted; ties broken by index.

    Distances come from the shared BLAS routine so both backends rank the
    exact same float values; only the selection loop is compiled.
    """
    Q = np.ascontiguousarray(Q, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    if k > X.shape[0]:
        raise ValueError("k exceeds number of reference points")
    nq = Q.shape[0]
    idx_out = np.empty((nq, k), dtype=np.int64)
    d_out = np.empty((nq, k), dtype=np.float64)
    for lo in range(0, nq, _CHUNK):
        hi = min(lo + _CHUNK, nq)
        D = sqdist_matrix(Q[lo:hi], X)
        idx_out[lo:hi], d_out[lo:hi] = _select_topk(D, k)
    return idx_out, d_out


@njit(cache=True)
def _soft_vote(cand, zhat, w, eta, alpha):
    m, d = cand.shape
    value = 0.0
    grad = np.zeros(d)
    for i in range(m):
        acc = 0.0
        for j in range(d):
            t = cand[i, j] - zhat[j]
            acc += t * t
        dist = np.sqrt(acc)
        s = 1.0 / (1.0 + np.exp(-alpha * (eta - dist)))
        value += w[i] * s
        if dist > 0.0:
            coef = w[i] * s * (1.0 - s) * alpha / dist
            for j in range(d):
                grad[j] += coef * (cand[i, j] - zhat[j])
    return value, grad


def soft_vote(cand, zhat, w, eta, alpha):
    """Soft neighbor-vote count and its gradient w.r.t. the query point."""
    cand = np.ascontiguousarray(cand, dtype=np.float64)
    zhat = np.ascontiguousarray(zhat, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    value, grad = _soft_vote(cand, zhat, w, float(eta), float(alpha))
    return float(value), grad
