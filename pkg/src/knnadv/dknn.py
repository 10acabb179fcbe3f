"""Deep kNN: per-layer neighbor search + inductive conformal scoring.

The nonconformity of (x, y) is the number of k-nearest neighbors, summed over
all representation layers, whose label differs from y. p-values compare a
query's score against the calibration multiset with an inclusive >=.
"""

from dataclasses import dataclass

import numpy as np

from knnadv import nn
from knnadv.knn import KnnModel, knn_neighbors_batch, estimate_eta


@dataclass
class DknnPrediction:
    label: int
    p_values: np.ndarray  # (C,) in [0,1]
    credibility: float    # max p-value
    confidence: float     # 1 - second-largest p-value


class DknnModel:
    def __init__(self, params: nn.NetworkParams, layer_indexes, k: int,
                 calibration_scores, class_count: int, train=None):
        self.params = params
        self.layer_indexes = layer_indexes  # one cosine KnnModel per layer
        self.train = train  # LabeledDataset; needed by input-space attacks
        self.k = int(k)
        self.calibration_scores = np.sort(np.asarray(calibration_scores,
                                                     dtype=np.int64))
        self.class_count = int(class_count)
        self._eta_cache = None

    @property
    def depth(self) -> int:
        return len(self.layer_indexes)

    def layer_etas(self) -> np.ndarray:
        """Per-layer threshold: mean k-th-neighbor distance in each cosine space."""
        if self._eta_cache is None:
            self._eta_cache = np.array([estimate_eta(m) for m in self.layer_indexes])
        return self._eta_cache


def _neighbor_label_counts(model: DknnModel, X):
    """Per layer, per query: count of each label among the k nearest neighbors.

    Returns (B, layers, C) int array.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    reps = nn.forward_all_batch(model.params, X)
    B = X.shape[0]
    counts = np.zeros((B, model.depth, model.class_count), dtype=np.int64)
    for lam, index in enumerate(model.layer_indexes):
        idx, _ = knn_neighbors_batch(index, reps[lam])
        lab = index.labels[idx]  # (B, k)
        for r in range(B):
            counts[r, lam] = np.bincount(lab[r], minlength=model.class_count)
    return counts


def nonconformity_batch(model: DknnModel, X, Y) -> np.ndarray:
    """Per-sample sum over layers of neighbors whose label differs from y."""
    counts = _neighbor_label_counts(model, X)
    Y = np.atleast_1d(np.asarray(Y, dtype=np.int64))
    match = counts[np.arange(len(Y)), :, Y]  # (B, layers)
    return model.depth * model.k - match.sum(axis=1)


def nonconformity(model: DknnModel, x, y: int) -> int:
    if not 0 <= y < model.class_count:
        raise ValueError("label out of range")
    return int(nonconformity_batch(model, np.asarray(x)[None, :], [y])[0])


def dknn_fit(params: nn.NetworkParams, train, calibration, k: int) -> DknnModel:
    """Build per-layer cosine indexes over training representations and score
    the calibration set."""
    if calibration.n == 0:
        raise ValueError("calibration set must be non-empty")
    reps = nn.forward_all_batch(params, train.samples.astype(np.float64))
    indexes = [KnnModel(r, train.labels, k, metric="cosine") for r in reps]
    model = DknnModel(params, indexes, k, np.zeros(0, dtype=np.int64),
                      train.class_count, train=train)
    scores = nonconformity_batch(model, calibration.samples.astype(np.float64),
                                 calibration.labels)
    model.calibration_scores = np.sort(scores)
    return model


def _pvalues(model: DknnModel, scores_per_class):
    """Fraction of calibration scores >= each candidate score."""
    A = model.calibration_scores  # sorted ascending
    pos = np.searchsorted(A, scores_per_class, side="left")
    return (len(A) - pos) / len(A)


def dknn_predict_batch(model: DknnModel, X) -> list:
    counts = _neighbor_label_counts(model, X)
    # score for every candidate class at once
    match = counts.sum(axis=1)  # (B, C): matching neighbors per class
    scores = model.depth * model.k - match
    out = []
    for row in scores:
        p = _pvalues(model, row)
        label = int(np.argmax(p))  # argmax takes the smaller index on ties
        top = float(p[label])
        runner = float(np.partition(p, -2)[-2]) if len(p) > 1 else 0.0
        out.append(DknnPrediction(label, p, credibility=top,
                                  confidence=1.0 - runner))
    return out


def dknn_predict(model: DknnModel, x) -> DknnPrediction:
    return dknn_predict_batch(model, np.asarray(x)[None, :])[0]


def dknn_labels(model: DknnModel, X) -> np.ndarray:
    return np.array([p.label for p in dknn_predict_batch(model, X)],
                    dtype=np.int64)


def save_scores(model: DknnModel, path) -> None:
    """Calibration scores as plain text, one integer per line."""
    with open(path, "w") as f:
        for a in model.calibration_scores:
            f.write(f"{int(a)}\n")


def load_scores(path) -> np.ndarray:
    with open(path) as f:
        return np.array([int(line) for line in f if line.strip()], dtype=np.int64)
