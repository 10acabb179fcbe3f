"""Exact k-nearest-neighbor classification with Euclidean or cosine metric.

Cosine distance is handled by unit-normalizing points and queries and then
running the Euclidean machinery; neighbor ordering is identical.
"""

from dataclasses import dataclass

import numpy as np

from knnadv.backend import get_kernels


def unit_normalize(X, *, reject_zero: bool = True):
    """Scale rows to unit norm. Zero rows are an error by default."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    norms = np.linalg.norm(X, axis=1)
    if reject_zero and np.any(norms == 0.0):
        raise ValueError("zero-norm vector cannot be unit-normalized")
    out = X / np.where(norms == 0.0, 1.0, norms)[:, None]
    return out[0] if single else out


@dataclass(frozen=True)
class NeighborList:
    indices: np.ndarray   # (k,) training-row indices
    distances: np.ndarray  # (k,) nondecreasing


class KnnModel:
    """Brute-force kNN over a fixed point set."""

    def __init__(self, points, labels, k: int, metric: str = "euclidean"):
        if metric not in ("euclidean", "cosine"):
            raise ValueError(f"unknown metric {metric!r}")
        points = np.asarray(points, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if not 1 <= k <= points.shape[0]:
            raise ValueError("need 1 <= k <= n")
        if labels.shape != (points.shape[0],):
            raise ValueError("labels length must equal point count")
        self.points = points
        self.labels = labels
        self.k = int(k)
        self.metric = metric
        self.class_count = int(labels.max()) + 1 if labels.size else 0
        self._search_points = unit_normalize(points) if metric == "cosine" else points
        self._eta_cache = {}

    def _prep_queries(self, Q):
        Q = np.asarray(Q, dtype=np.float64)
        single = Q.ndim == 1
        if single:
            Q = Q[None, :]
        if Q.shape[1] != self.points.shape[1]:
            raise ValueError("query dimension mismatch")
        if self.metric == "cosine":
            Q = unit_normalize(Q)
        return Q, single


def knn_neighbors_batch(model: KnnModel, Q, k: int | None = None):
    """Exact k nearest neighbors for each query row.

    Returns (indices (nq,k), distances (nq,k)); distances are in the search
    space (Euclidean between unit vectors for cosine), sorted, ties by index.
    """
    k = model.k if k is None else k
    Q, _ = model._prep_queries(np.atleast_2d(np.asarray(Q, dtype=np.float64)))
    idx, sqd = get_kernels().topk_sqdist(Q, model._search_points, k)
    return idx, np.sqrt(sqd)


def knn_neighbors(model: KnnModel, query) -> NeighborList:
    Q, single = model._prep_queries(query)
    if not single:
        raise ValueError("knn_neighbors takes a single query vector")
    idx, dist = knn_neighbors_batch(model, Q)
    return NeighborList(idx[0], dist[0])


def _vote(model, idx, dist):
    """Plurality vote; ties by smaller summed distance, then smaller label."""
    counts = np.bincount(model.labels[idx], minlength=model.class_count)
    best = counts.max()
    tied = np.flatnonzero(counts == best)
    if len(tied) == 1:
        return int(tied[0])
    sums = np.array([dist[model.labels[idx] == c].sum() for c in tied])
    return int(tied[np.lexsort((tied, sums))[0]])


def knn_predict_batch(model: KnnModel, Q) -> np.ndarray:
    idx, dist = knn_neighbors_batch(model, np.atleast_2d(Q))
    return np.array([_vote(model, idx[r], dist[r]) for r in range(idx.shape[0])],
                    dtype=np.int64)


def knn_predict(model: KnnModel, query) -> int:
    Q, single = model._prep_queries(query)
    if not single:
        raise ValueError("knn_predict takes a single query vector")
    return int(knn_predict_batch(model, Q)[0])


def estimate_eta(model: KnnModel, k: int | None = None) -> float:
    """Mean distance from each training point to its k-th nearest neighbor,
    excluding the point itself."""
    k = model.k if k is None else k
    if model.points.shape[0] <= k:
        raise ValueError("need n > k to exclude each point from its own list")
    if k in model._eta_cache:
        return model._eta_cache[k]
    X = model._search_points
    # k+1 neighbors; drop the self-match (distance 0 at the point's own row)
    idx, sqd = get_kernels().topk_sqdist(X, X, k + 1)
    n = X.shape[0]
    kth = np.empty(n)
    for i in range(n):
        self_pos = np.flatnonzero(idx[i] == i)
        if self_pos.size:
            keep = np.delete(sqd[i], self_pos[0])
        else:
            # duplicate rows can push the self-match out of the list
            keep = sqd[i][:k]
        kth[i] = np.sqrt(keep[k - 1])
    eta = float(kth.mean())
    model._eta_cache[k] = eta
    return eta
