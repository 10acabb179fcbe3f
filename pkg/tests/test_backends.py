"""The numba and numpy kernel implementations must agree exactly on neighbor
indices and to float tolerance on distances and soft-vote values."""

import numpy as np
import pytest

from knnadv.backend import backend_name, get_kernels

np_kern = get_kernels("numpy")
try:
    nb_kern = get_kernels("numba")
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def _case(rng, nq=17, n=40, d=6, k=5):
    Q = rng.random((nq, d))
    X = rng.random((n, d))
    return Q, X, k


def test_backend_name_is_valid():
    assert backend_name() in ("numba", "numpy")


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        get_kernels("cuda")


def _sort_oracle(Q, X, k):
    d = np.sum((Q[:, None, :] - X[None, :, :]) ** 2, axis=2)
    idx = np.argsort(d, axis=1, kind="stable")[:, :k]
    return idx, np.take_along_axis(d, idx, axis=1)


class TestNumpyKernels:
    def test_topk_matches_sort_oracle(self, rng):
        Q, X, k = _case(rng)
        idx, sqd = np_kern.topk_sqdist(Q, X, k)
        oidx, osqd = _sort_oracle(Q, X, k)
        np.testing.assert_array_equal(idx, oidx)
        np.testing.assert_allclose(sqd, osqd, atol=1e-12)

    def test_topk_tie_break_prefers_smaller_index(self):
        X = np.array([[0.5, 0.5]] * 4)  # all equidistant
        idx, _ = np_kern.topk_sqdist(np.array([[0.0, 0.0]]), X, 3)
        np.testing.assert_array_equal(idx[0], [0, 1, 2])

    def test_topk_k_too_large_raises(self, rng):
        Q, X, _ = _case(rng)
        with pytest.raises(ValueError):
            np_kern.topk_sqdist(Q, X, X.shape[0] + 1)

    def test_soft_vote_value_and_shape(self, rng):
        cand = rng.random((7, 5))
        z = rng.random(5)
        w = np.ones(7)
        value, grad = np_kern.soft_vote(cand, z, w, 0.4, 4.0)
        assert np.isscalar(value) or np.ndim(value) == 0
        assert grad.shape == (5,)
        # each sigmoid term lies in (0, 1), so the total is bounded by m
        assert 0.0 < value < 7.0


@needs_numba
class TestBackendAgreement:
    @pytest.mark.parametrize("k", [1, 3, 11])
    def test_topk_identical(self, rng, k):
        Q, X, _ = _case(rng, nq=23, n=57, d=9)
        i1, d1 = np_kern.topk_sqdist(Q, X, k)
        i2, d2 = nb_kern.topk_sqdist(Q, X, k)
        np.testing.assert_array_equal(i1, i2)
        np.testing.assert_allclose(d1, d2, atol=1e-12)

    def test_topk_identical_on_ties(self):
        X = np.repeat(np.arange(5.0)[:, None], 3, axis=1)[[0, 1, 1, 2, 2, 2]]
        Q = np.zeros((1, 3))
        i1, _ = np_kern.topk_sqdist(Q, X, 4)
        i2, _ = nb_kern.topk_sqdist(Q, X, 4)
        np.testing.assert_array_equal(i1, i2)

    def test_soft_vote_identical(self, rng):
        for _ in range(5):
            cand = rng.random((6, 4))
            z = rng.random(4)
            w = rng.choice([-1.0, 1.0], 6)
            v1, g1 = np_kern.soft_vote(cand, z, w, 0.3, 4.0)
            v2, g2 = nb_kern.soft_vote(cand, z, w, 0.3, 4.0)
            np.testing.assert_allclose(v1, v2, rtol=1e-12)
            np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-14)

    def test_numba_run_is_deterministic(self, rng):
        Q, X, k = _case(rng, nq=50, n=300, d=12, k=20)
        i1, d1 = nb_kern.topk_sqdist(Q, X, k)
        i2, d2 = nb_kern.topk_sqdist(Q, X, k)
        np.testing.assert_array_equal(i1, i2)
        np.testing.assert_array_equal(d1, d2)
