import numpy as np
import pytest

from knnadv import datasets
from knnadv.knn import (KnnModel, knn_neighbors, knn_neighbors_batch,
                        knn_predict, knn_predict_batch, estimate_eta,
                        unit_normalize)


def _model(rng, n=50, d=5, k=7, metric="euclidean"):
    pts = rng.random((n, d))
    labels = rng.integers(0, 4, n)
    return KnnModel(pts, labels, k, metric=metric)


class TestConstruction:
    def test_rejects_bad_k(self, rng):
        pts = rng.random((5, 3))
        with pytest.raises(ValueError):
            KnnModel(pts, np.zeros(5, dtype=int), 0)
        with pytest.raises(ValueError):
            KnnModel(pts, np.zeros(5, dtype=int), 6)

    def test_rejects_unknown_metric(self, rng):
        with pytest.raises(ValueError):
            _model(rng, metric="manhattan")

    def test_rejects_label_length_mismatch(self, rng):
        with pytest.raises(ValueError):
            KnnModel(rng.random((5, 3)), np.zeros(4, dtype=int), 2)


class TestUnitNormalize:
    def test_rows_become_unit(self, rng):
        U = unit_normalize(rng.random((10, 4)) + 0.1)
        np.testing.assert_allclose(np.linalg.norm(U, axis=1), 1.0, atol=1e-12)

    def test_zero_row_rejected(self):
        with pytest.raises(ValueError):
            unit_normalize(np.zeros((1, 3)))


class TestNeighbors:
    def test_matches_full_sort_oracle(self, rng):
        model = _model(rng, n=120, d=6, k=9)
        Q = rng.random((30, 6))
        idx, dist = knn_neighbors_batch(model, Q)
        d_all = np.linalg.norm(Q[:, None, :] - model.points[None, :, :], axis=2)
        oracle = np.argsort(d_all, axis=1, kind="stable")[:, :9]
        np.testing.assert_array_equal(idx, oracle)
        np.testing.assert_allclose(
            dist, np.take_along_axis(d_all, oracle, axis=1), atol=1e-12)

    def test_distances_nondecreasing(self, rng):
        model = _model(rng, k=11)
        nl = knn_neighbors(model, rng.random(5))
        assert np.all(np.diff(nl.distances) >= 0)

    def test_cosine_equals_normalized_euclidean(self, rng):
        pts = rng.random((40, 6)) + 0.05
        labels = rng.integers(0, 3, 40)
        q = rng.random(6) + 0.05
        cos = KnnModel(pts, labels, 5, metric="cosine")
        euc = KnnModel(unit_normalize(pts), labels, 5)
        np.testing.assert_array_equal(
            knn_neighbors(cos, q).indices,
            knn_neighbors(euc, unit_normalize(q)).indices)

    def test_cosine_is_scale_invariant(self, rng):
        model = _model(rng, metric="cosine")
        q = rng.random(5) + 0.1
        np.testing.assert_array_equal(knn_neighbors(model, q).indices,
                                      knn_neighbors(model, 7.3 * q).indices)

    def test_single_query_only(self, rng):
        model = _model(rng)
        with pytest.raises(ValueError):
            knn_neighbors(model, rng.random((2, 5)))


class TestPredict:
    def test_plurality_wins(self):
        pts = np.array([[0.1], [0.12], [0.9]])
        model = KnnModel(pts, [1, 1, 0], 3)
        assert knn_predict(model, np.array([0.0])) == 1

    def test_distance_breaks_vote_tie(self):
        # one point of each class; class 1's point is closer
        pts = np.array([[0.3], [0.5]])
        model = KnnModel(pts, [0, 1], 2)
        assert knn_predict(model, np.array([0.45])) == 1

    def test_label_breaks_full_tie(self):
        pts = np.array([[0.4], [0.6]])
        model = KnnModel(pts, [1, 0], 2)
        assert knn_predict(model, np.array([0.5])) == 0

    def test_batch_matches_single(self, rng):
        model = _model(rng, n=60, k=5)
        Q = rng.random((12, 5))
        batch = knn_predict_batch(model, Q)
        singles = [knn_predict(model, q) for q in Q]
        np.testing.assert_array_equal(batch, singles)

    def test_high_accuracy_on_separated_blobs(self):
        data = datasets.synth_blobs(0, 50, 3, 8, 0.08)
        probe = datasets.synth_blobs(1, 20, 3, 8, 0.08)
        model = KnnModel(data.samples, data.labels, 5)
        acc = np.mean(knn_predict_batch(model, probe.samples) == probe.labels)
        assert acc > 0.95


class TestEstimateEta:
    def test_matches_brute_force_oracle(self, rng):
        model = _model(rng, n=30, d=4, k=3)
        d = np.linalg.norm(model.points[:, None, :] - model.points[None, :, :],
                           axis=2)
        np.fill_diagonal(d, np.inf)
        oracle = float(np.sort(d, axis=1)[:, 2].mean())  # 3rd non-self neighbor
        assert abs(estimate_eta(model) - oracle) < 1e-10

    def test_survives_duplicate_rows(self):
        pts = np.array([[0.2, 0.2], [0.2, 0.2], [0.8, 0.8], [0.5, 0.1]])
        model = KnnModel(pts, [0, 0, 1, 1], 2)
        eta = estimate_eta(model)
        assert np.isfinite(eta) and eta > 0

    def test_requires_n_greater_than_k(self, rng):
        pts = rng.random((4, 3))
        model = KnnModel(pts, np.zeros(4, dtype=int), 4)
        with pytest.raises(ValueError):
            estimate_eta(model)

    def test_cached_value_is_stable(self, rng):
        model = _model(rng)
        assert estimate_eta(model) == estimate_eta(model)
