"""Small fully-connected network exposing every representation layer.

Hidden layers are rectified; the last layer returns raw logits. Besides the
forward pass, the module computes input-space gradients of arbitrary
layer-space losses via reverse-mode accumulation (cotangent per layer).
"""

from dataclasses import dataclass
import struct

import numpy as np

_MAGIC = b"KNNADV-NET1\n"


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    layer_widths: tuple  # hidden widths ..., ending in class_count logits

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(self.layer_widths))
        if len(self.layer_widths) < 2:
            raise ValueError("need at least 2 layers")

    @property
    def depth(self) -> int:
        return len(self.layer_widths)

    @property
    def class_count(self) -> int:
        return self.layer_widths[-1]


@dataclass(frozen=True)
class NetworkParams:
    spec: NetworkSpec
    weights: tuple  # weights[i]: (fan_in, fan_out) float32
    biases: tuple   # biases[i]: (fan_out,) float32

    def __post_init__(self):
        fan_in = self.spec.input_dim
        for w, b, width in zip(self.weights, self.biases, self.spec.layer_widths):
            if w.shape != (fan_in, width) or b.shape != (width,):
                raise ValueError("parameter shapes inconsistent with spec")
            fan_in = width


@dataclass
class ActivationStack:
    representations: list  # one array per layer; post-relu hidden, raw logits last

    @property
    def logits(self):
        return self.representations[-1]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch: int = 64
    learning_rate: float = 0.1
    seed: int = 0


class TrainingDivergence(RuntimeError):
    pass


def init_params(spec: NetworkSpec, seed: int = 0) -> NetworkParams:
    """He-initialized weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    fan_in = spec.input_dim
    for width in spec.layer_widths:
        w = rng.standard_normal((fan_in, width)) * np.sqrt(2.0 / fan_in)
        weights.append(w.astype(np.float32))
        biases.append(np.zeros(width, dtype=np.float32))
        fan_in = width
    return NetworkParams(spec, tuple(weights), tuple(biases))


def _forward_full(params: NetworkParams, X):
    """Batched forward keeping pre-activations. X: (B, d)."""
    pre, post = [], []
    h = X
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
        post.append(h)
    return pre, post


def forward_all_batch(params: NetworkParams, X) -> list:
    """Representations f_layer(x) for a batch; list of (B, width) arrays."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.spec.input_dim:
        raise ValueError("input batch has wrong dimension")
    _, post = _forward_full(params, X)
    return post


def forward_all(params: NetworkParams, x) -> ActivationStack:
    """Representations of a single sample."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.spec.input_dim,):
        raise ValueError("input has wrong dimension")
    post = forward_all_batch(params, x[None, :])
    return ActivationStack([p[0] for p in post])


def input_gradient_batch(params: NetworkParams, X, cotangents) -> np.ndarray:
    """Accumulate sum_layer J_layer(x)^T @ cotangent_layer per batch row.

    `cotangents` is a list with one entry per layer: an array of shape
    (B, width) or None for layers without a contribution.
    """
    X = np.asarray(X, dtype=np.float64)
    pre, _ = _forward_full(params, X)
    depth = len(params.weights)
    if len(cotangents) != depth:
        raise ValueError("need one cotangent slot per layer")
    delta = None
    for i in range(depth - 1, -1, -1):
        cot = cotangents[i]
        if cot is not None:
            cot = np.asarray(cot, dtype=np.float64)
            if cot.shape != pre[i].shape:
                raise ValueError(f"cotangent {i} has shape {cot.shape}, "
                                 f"expected {pre[i].shape}")
            delta = cot if delta is None else delta + cot
        if delta is None:
            continue
        if i != depth - 1:
            # hidden outputs are post-relu; subgradient at 0 is 0
            delta = delta * (pre[i] > 0.0)
        delta = delta @ params.weights[i].T.astype(np.float64)
    if delta is None:
        return np.zeros_like(X)
    return delta


def input_gradient(params: NetworkParams, x, cotangents) -> np.ndarray:
    """Single-sample input gradient; cotangents are (width,) arrays or None."""
    x = np.asarray(x, dtype=np.float64)
    cots = [None if c is None else np.asarray(c, dtype=np.float64)[None, :]
            for c in cotangents]
    return input_gradient_batch(params, x[None, :], cots)[0]


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict_batch(params: NetworkParams, X) -> np.ndarray:
    """Argmax-logit labels for a batch."""
    return np.argmax(forward_all_batch(params, X)[-1], axis=1)


def train_network(spec: NetworkSpec, train, config: TrainConfig) -> NetworkParams:
    """Mini-batch SGD on softmax cross-entropy; deterministic for a seed."""
    if train.labels.size and train.labels.max() >= spec.class_count:
        raise ValueError("label out of range for network class count")
    params = init_params(spec, config.seed)
    weights = [w.astype(np.float64) for w in params.weights]
    biases = [b.astype(np.float64) for b in params.biases]
    rng = np.random.default_rng(config.seed + 1)
    X = train.samples.astype(np.float64)
    Y = train.labels
    n = X.shape[0]
    depth = len(weights)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, config.batch):
            idx = order[lo:lo + config.batch]
            xb, yb = X[idx], Y[idx]
            # forward
            pre, post = [], []
            h = xb
            for i in range(depth):
                z = h @ weights[i] + biases[i]
                pre.append(z)
                h = z if i == depth - 1 else np.maximum(z, 0.0)
                post.append(h)
            probs = _softmax(post[-1])
            loss = -np.mean(np.log(probs[np.arange(len(yb)), yb] + 1e-12))
            if not np.isfinite(loss):
                raise TrainingDivergence(f"non-finite loss at epoch {epoch}")
            # backward
            delta = probs
            delta[np.arange(len(yb)), yb] -= 1.0
            delta /= len(yb)
            for i in range(depth - 1, -1, -1):
                h_in = xb if i == 0 else post[i - 1]
                gw = h_in.T @ delta
                gb = delta.sum(axis=0)
                if i > 0:
                    delta = (delta @ weights[i].T) * (pre[i - 1] > 0.0)
                weights[i] -= config.learning_rate * gw
                biases[i] -= config.learning_rate * gb
    return NetworkParams(spec,
                         tuple(w.astype(np.float32) for w in weights),
                         tuple(b.astype(np.float32) for b in biases))


def persist_params(params: NetworkParams, path) -> None:
    """Magic string, spec header, then little-endian f32 payload in layer order."""
    spec = params.spec
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<ii", spec.input_dim, spec.depth))
        f.write(struct.pack(f"<{spec.depth}i", *spec.layer_widths))
        for w, b in zip(params.weights, params.biases):
            f.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def restore_params(path) -> NetworkParams:
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not a knnadv weight file")
        head = f.read(8)
        if len(head) != 8:
            raise ValueError(f"{path}: truncated header")
        input_dim, depth = struct.unpack("<ii", head)
        widths_raw = f.read(4 * depth)
        if len(widths_raw) != 4 * depth:
            raise ValueError(f"{path}: truncated header")
        widths = struct.unpack(f"<{depth}i", widths_raw)
        spec = NetworkSpec(input_dim, widths)
        weights, biases = [], []
        fan_in = input_dim
        for width in widths:
            need = 4 * (fan_in * width + width)
            raw = f.read(need)
            if len(raw) != need:
                raise ValueError(f"{path}: payload shorter than declared shapes")
            w = np.frombuffer(raw[:4 * fan_in * width], dtype="<f4")
            b = np.frombuffer(raw[4 * fan_in * width:], dtype="<f4")
            weights.append(w.reshape(fan_in, width).copy())
            biases.append(b.copy())
            fan_in = width
        if f.read(1):
            raise ValueError(f"{path}: trailing bytes after declared payload")
    return NetworkParams(spec, tuple(weights), tuple(biases))
