"""Pure-numpy kernel implementations (fallback backend)."""

import numpy as np

_CHUNK = 256


def sqdist_matrix(Q, X):
    """Squared Euclidean distances, shape (nq, nx)."""
    Q = np.asarray(Q, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    qq = np.sum(Q * Q, axis=1)[:, None]
    xx = np.sum(X * X, axis=1)[None, :]
    d = qq + xx - 2.0 * (Q @ X.T)
    np.maximum(d, 0.0, out=d)
    return d


def topk_sqdist(Q, X, k):
    """k smallest squared distances per query, sorted; ties broken by index.

    Returns (indices (nq, k) int64, sqdists (nq, k) float64).
    """
    Q = np.asarray(Q, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    nq = Q.shape[0]
    n = X.shape[0]
    idx_out = np.empty((nq, k), dtype=np.int64)
    d_out = np.empty((nq, k), dtype=np.float64)
    for lo in range(0, nq, _CHUNK):
        hi = min(lo + _CHUNK, nq)
        d = sqdist_matrix(Q[lo:hi], X)
        if k < n:
            part = np.argpartition(d, k - 1, axis=1)[:, :k]
        else:
            part = np.broadcast_to(np.arange(n), (hi - lo, n)).copy()
        pd = np.take_along_axis(d, part, axis=1)
        # lexsort: primary key distance, secondary key index
        for r in range(hi - lo):
            order = np.lexsort((part[r], pd[r]))
            idx_out[lo + r] = part[r][order]
            d_out[lo + r] = pd[r][order]
    return idx_out, d_out


def soft_vote(cand, zhat, w, eta, alpha):
    """Soft neighbor-vote count and its gradient w.r.t. the query point.

    value = sum_i w_i * s_i,  s_i = sigmoid(alpha * (eta - ||cand_i - zhat||))
    A candidate coinciding with zhat contributes zero gradient.
    """
    cand = np.asarray(cand, dtype=np.float64)
    zhat = np.asarray(zhat, dtype=np.float64)
    diff = cand - zhat[None, :]
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    s = 1.0 / (1.0 + np.exp(-alpha * (eta - dist)))
    value = float(np.sum(w * s))
    coef = w * s * (1.0 - s) * alpha
    safe = dist > 0.0
    scale = np.where(safe, coef / np.where(safe, dist, 1.0), 0.0)
    grad = diff.T @ scale
    return value, grad
