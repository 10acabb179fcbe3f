"""Shared fixtures.

Two tiers: small synthetic fixtures for unit tests, and desk-scale fixtures
(10k-train digit corpus, trained MLP, k=75 models) for the acceptance suite.
Desk artifacts are deterministic, so they are cached on disk and reused
across test runs.
"""

import os
from pathlib import Path

import numpy as np
import pytest

from knnadv import corpus, datasets, dknn, knn, nn

CACHE = Path(os.environ.get("KNNADV_TEST_CACHE",
                            Path.home() / ".cache" / "knnadv-tests"))

DESK_K = 75
DESK_HIDDEN = (256, 128, 64, 10)
DESK_TRAIN_CFG = nn.TrainConfig(epochs=20, batch=64, learning_rate=0.1, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def blobs():
    return datasets.synth_blobs(0, 60, 3, 8, 0.12)


# ---------------------------------------------------------------------------
# desk-scale fixtures

@pytest.fixture(scope="session")
def desk_data():
    """(train, calibration, test): 10000 / 200 / 1000 digit samples."""
    root = CACHE / "corpus-v1"
    if not (root / corpus.TRAIN_IMAGES).exists():
        corpus.write_corpus(root)
    train = datasets.load_idx(root / corpus.TRAIN_IMAGES,
                              root / corpus.TRAIN_LABELS)
    pool = datasets.load_idx(root / corpus.TEST_IMAGES,
                             root / corpus.TEST_LABELS)
    calib, test = datasets.split_calibration(pool, datasets.SplitSpec(20, 1))
    return train, calib, test.subset(np.arange(1000))


@pytest.fixture(scope="session")
def desk_net(desk_data):
    path = CACHE / "net-v1.bin"
    if path.exists():
        return nn.restore_params(path)
    train, _, _ = desk_data
    spec = nn.NetworkSpec(train.dim, DESK_HIDDEN)
    params = nn.train_network(spec, train, DESK_TRAIN_CFG)
    nn.persist_params(params, path)
    return params


@pytest.fixture(scope="session")
def desk_knn(desk_data):
    train, _, _ = desk_data
    return knn.KnnModel(train.samples, train.labels, DESK_K)


@pytest.fixture(scope="session")
def desk_dknn(desk_net, desk_data):
    train, calib, _ = desk_data
    return dknn.dknn_fit(desk_net, train, calib, DESK_K)


@pytest.fixture(scope="session")
def attack_set(desk_data):
    """First 100 test samples; the acceptance attacks run on these."""
    _, _, test = desk_data
    return test.subset(np.arange(100))
