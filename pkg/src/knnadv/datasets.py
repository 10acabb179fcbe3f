"""Datasets: IDX loading, calibration splits, and synthetic fixtures.

Samples live in [0,1]^d as float32 row vectors; labels are integers in
[0, class_count). All containers are immutable after construction.
"""

from dataclasses import dataclass
import struct

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Malformed IDX file: bad magic, bad header, or truncated payload."""


@dataclass(frozen=True)
class LabeledDataset:
    samples: np.ndarray  # (n, d) float32 in [0, 1]
    labels: np.ndarray   # (n,) int64
    class_count: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32)
        labels = np.asarray(self.labels, dtype=np.int64)
        if samples.ndim != 2:
            raise ValueError("samples must be a 2-D matrix")
        if labels.shape != (samples.shape[0],):
            raise ValueError("labels length must equal sample count")
        if samples.size and (samples.min() < 0.0 or samples.max() > 1.0):
            raise ValueError("sample values must lie in [0, 1]")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ValueError("labels must lie in [0, class_count)")
        samples.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def subset(self, indices) -> "LabeledDataset":
        indices = np.asarray(indices)
        return LabeledDataset(self.samples[indices], self.labels[indices],
                              self.class_count)


@dataclass(frozen=True)
class SplitSpec:
    calibration_per_class: int
    seed: int = 0


def _read_be32(f, path):
    raw = f.read(4)
    if len(raw) != 4:
        raise IdxFormatError(f"{path}: truncated header")
    return struct.unpack(">i", raw)[0]


def _read_exact(f, count, path):
    raw = f.read(count)
    if len(raw) != count:
        raise IdxFormatError(f"{path}: truncated payload "
                             f"(expected {count} bytes, got {len(raw)})")
    return raw


def load_idx(images_path, labels_path, class_count: int = 10) -> LabeledDataset:
    """Load an MNIST-format IDX image/label file pair.

    Pixels are scaled to [0,1] by division by 255 and images are flattened
    row-major.
    """
    with open(images_path, "rb") as f:
        magic = _read_be32(f, images_path)
        if magic != IDX_IMAGE_MAGIC:
            raise IdxFormatError(f"{images_path}: bad image magic {magic:#010x}")
        count = _read_be32(f, images_path)
        rows = _read_be32(f, images_path)
        cols = _read_be32(f, images_path)
        raw = _read_exact(f, count * rows * cols, images_path)
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)

    with open(labels_path, "rb") as f:
        magic = _read_be32(f, labels_path)
        if magic != IDX_LABEL_MAGIC:
            raise IdxFormatError(f"{labels_path}: bad label magic {magic:#010x}")
        label_count = _read_be32(f, labels_path)
        labels = np.frombuffer(_read_exact(f, label_count, labels_path),
                               dtype=np.uint8)

    if label_count != count:
        raise ValueError(f"item count mismatch: {count} images vs "
                         f"{label_count} labels")
    samples = pixels.astype(np.float32) / 255.0
    return LabeledDataset(samples, labels.astype(np.int64), class_count)


def save_idx(dataset: LabeledDataset, images_path, labels_path,
             rows: int, cols: int) -> None:
    """Write a dataset as an IDX image/label file pair (inverse of load_idx).

    Values are quantized back to u8 via round(v * 255).
    """
    if rows * cols != dataset.dim:
        raise ValueError("rows*cols must equal sample dimension")
    pixels = np.clip(np.rint(dataset.samples * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">iiii", IDX_IMAGE_MAGIC, dataset.n, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">ii", IDX_LABEL_MAGIC, dataset.n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def split_calibration(dataset: LabeledDataset, spec: SplitSpec):
    """Hold out `calibration_per_class` samples per class by seeded shuffle.

    Returns (calibration, remainder); a disjoint, exhaustive partition.
    """
    rng = np.random.default_rng(spec.seed)
    calib_idx = []
    for c in range(dataset.class_count):
        members = np.flatnonzero(dataset.labels == c)
        if members.size < spec.calibration_per_class:
            raise ValueError(f"class {c} has {members.size} samples, need "
                             f"{spec.calibration_per_class} for calibration")
        picked = rng.permutation(members)[:spec.calibration_per_class]
        calib_idx.append(picked)
    calib_idx = np.sort(np.concatenate(calib_idx)) if calib_idx else np.array([], dtype=np.int64)
    mask = np.ones(dataset.n, dtype=bool)
    mask[calib_idx.astype(np.int64)] = False
    remainder_idx = np.flatnonzero(mask)
    return dataset.subset(calib_idx.astype(np.int64)), dataset.subset(remainder_idx)


def synth_blobs(seed: int, n_per_class: int, class_count: int, d: int,
                spread: float) -> LabeledDataset:
    """Gaussian clusters with means on scaled simplex vertices, clipped to [0,1]^d.

    Requires class_count <= d so every class gets its own vertex.
    """
    if d < 1 or spread < 0:
        raise ValueError("need d >= 1 and spread >= 0")
    if class_count > d:
        raise ValueError("class_count must not exceed d (one vertex per class)")
    rng = np.random.default_rng(seed)
    means = np.full((class_count, d), 0.15)
    means[np.arange(class_count), np.arange(class_count)] = 0.85
    samples = np.empty((n_per_class * class_count, d), dtype=np.float32)
    labels = np.empty(n_per_class * class_count, dtype=np.int64)
    for c in range(class_count):
        lo = c * n_per_class
        pts = means[c] + spread * rng.standard_normal((n_per_class, d))
        samples[lo:lo + n_per_class] = np.clip(pts, 0.0, 1.0)
        labels[lo:lo + n_per_class] = c
    return LabeledDataset(samples, labels, class_count)


def to_csv(dataset: LabeledDataset, path) -> None:
    """One row per sample, label in the last column."""
    out = np.column_stack([dataset.samples.astype(np.float64),
                           dataset.labels.astype(np.float64)])
    np.savetxt(path, out, delimiter=",", fmt="%.9g")


def from_csv(path, class_count: int = 10) -> LabeledDataset:
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    return LabeledDataset(data[:, :-1].astype(np.float32),
                          data[:, -1].astype(np.int64), class_count)
