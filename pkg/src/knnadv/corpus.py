"""Deterministic desk-scale digit corpus in MNIST IDX format.

Built from scikit-learn's bundled 8x8 digits: each base digit is upsampled to
28x28 and augmented with seeded shifts, rotations, smoothing, and noise. Base
digits are split disjointly between the training pool and the test pool so
test samples are never augmentations of a training digit.
"""

import os

import numpy as np
from scipy import ndimage

from knnadv.datasets import LabeledDataset, save_idx

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"

_SIDE = 28


def _upsample(img8):
    """8x8 -> 28x28: 3x nearest-neighbor blow-up, 2px border, light blur."""
    big = np.kron(img8, np.ones((3, 3)))
    padded = np.pad(big, 2)
    return ndimage.gaussian_filter(padded, sigma=0.9)


def _augment(img, rng, max_shift, max_rot, noise):
    out = ndimage.rotate(img, rng.uniform(-max_rot, max_rot),
                         reshape=False, order=1, mode="constant")
    out = ndimage.shift(out, (rng.integers(-max_shift, max_shift + 1),
                              rng.integers(-max_shift, max_shift + 1)),
                        order=0, mode="constant")
    out = out + noise * rng.standard_normal(out.shape)
    return np.clip(out, 0.0, 1.0)


def _render_pool(bases, base_labels, count, rng, max_shift, max_rot, noise):
    samples = np.empty((count, _SIDE * _SIDE), dtype=np.float32)
    labels = np.empty(count, dtype=np.int64)
    order = rng.permutation(len(bases))
    for i in range(count):
        j = order[i % len(bases)]
        img = _augment(bases[j], rng, max_shift, max_rot, noise)
        samples[i] = img.reshape(-1).astype(np.float32)
        labels[i] = base_labels[j]
    return LabeledDataset(samples, labels, 10)


def build_corpus(n_train: int = 10000, n_test: int = 1200, seed: int = 0,
                 max_shift: int = 2, max_rot: float = 14.0,
                 noise: float = 0.12):
    """Return (train, test) datasets of 28x28 digit images in [0,1]^784."""
    from sklearn.datasets import load_digits

    X, y = load_digits(return_X_y=True)
    imgs = (X / 16.0).reshape(-1, 8, 8)
    rng = np.random.default_rng(seed)
    # disjoint base-digit split, stratified by class
    train_mask = np.zeros(len(y), dtype=bool)
    for c in range(10):
        members = np.flatnonzero(y == c)
        picked = rng.permutation(members)[:int(0.8 * members.size)]
        train_mask[picked] = True
    bases = np.stack([_upsample(im) for im in imgs])
    train = _render_pool(bases[train_mask], y[train_mask], n_train, rng,
                         max_shift, max_rot, noise)
    test = _render_pool(bases[~train_mask], y[~train_mask], n_test, rng,
                        max_shift, max_rot, noise)
    return train, test


def write_corpus(out_dir, **kwargs) -> None:
    """Materialize the corpus as MNIST-format IDX files in out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    train, test = build_corpus(**kwargs)
    save_idx(train, os.path.join(out_dir, TRAIN_IMAGES),
             os.path.join(out_dir, TRAIN_LABELS), _SIDE, _SIDE)
    save_idx(test, os.path.join(out_dir, TEST_IMAGES),
             os.path.join(out_dir, TEST_LABELS), _SIDE, _SIDE)
