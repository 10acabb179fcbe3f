"""Shared attack machinery: results, target selection, soft-vote objectives,
tanh box reparameterization, Adam, and the penalty-coefficient search."""

from dataclasses import dataclass
import math

import numpy as np

from knnadv import nn
from knnadv.backend import get_kernels
from knnadv.knn import unit_normalize

_ATANH_CLIP = 1.0 - 1e-6


@dataclass
class AttackResult:
    z: np.ndarray
    z_hat: np.ndarray
    success: bool
    l2_distortion: float
    linf_distortion: float
    credibility: float | None = None
    iterations_used: int = 0
    final_c: float | None = None

    @property
    def delta(self) -> np.ndarray:
        return self.z_hat - self.z


def make_result(z, z_hat, success, *, credibility=None, iterations_used=0,
                final_c=None) -> AttackResult:
    z = np.asarray(z, dtype=np.float64)
    z_hat = np.asarray(z_hat, dtype=np.float64)
    delta = z_hat - z
    return AttackResult(z, z_hat, bool(success),
                        float(np.linalg.norm(delta)),
                        float(np.max(np.abs(delta))) if delta.size else 0.0,
                        credibility=credibility,
                        iterations_used=iterations_used, final_c=final_c)


@dataclass
class TargetSelection:
    y_adv: int
    candidates: np.ndarray        # (m, d) raw input-space samples
    weights: np.ndarray           # (m,) +1 for y_adv members, else -1
    candidate_indices: np.ndarray  # training-row indices


def class_means(train) -> np.ndarray:
    means = np.empty((train.class_count, train.dim))
    for c in range(train.class_count):
        members = train.samples[train.labels == c]
        if members.shape[0] == 0:
            raise ValueError(f"class {c} has no training samples")
        means[c] = members.mean(axis=0, dtype=np.float64)
    return means


def select_target_class(train, z, y_z: int) -> int:
    """Foreign class whose training mean is nearest to z; ties -> smaller label."""
    if train.class_count < 2:
        raise ValueError("need at least 2 classes")
    means = class_means(train)
    d = np.linalg.norm(means - np.asarray(z, dtype=np.float64)[None, :], axis=1)
    d[y_z] = np.inf
    return int(np.argmin(d))


def select_candidates(train, z, y_adv: int, m: int,
                      metric: str = "euclidean") -> TargetSelection:
    """m training samples of class y_adv closest to z in input space."""
    members = np.flatnonzero(train.labels == y_adv)
    if members.size < m:
        raise ValueError(f"class {y_adv} has {members.size} samples, need {m}")
    pts = train.samples[members].astype(np.float64)
    zq = np.asarray(z, dtype=np.float64)
    if metric == "cosine":
        pts_s, zq_s = unit_normalize(pts), unit_normalize(zq)
    else:
        pts_s, zq_s = pts, zq
    d = np.linalg.norm(pts_s - zq_s[None, :], axis=1)
    order = np.lexsort((members, d))[:m]
    chosen = members[order]
    return TargetSelection(y_adv, train.samples[chosen].astype(np.float64),
                           np.ones(m), chosen)


def select_candidates_layer1(dknn_model, train, z, y_adv: int, m: int) -> TargetSelection:
    """m training samples of class y_adv whose first-layer representation is
    closest to that of z (cosine space)."""
    index = dknn_model.layer_indexes[0]
    members = np.flatnonzero(index.labels == y_adv)
    if members.size < m:
        raise ValueError(f"class {y_adv} has {members.size} samples, need {m}")
    rep_z = unit_normalize(nn.forward_all(dknn_model.params,
                                          np.asarray(z, dtype=np.float64))
                           .representations[0])
    reps = index._search_points[members]
    d = np.linalg.norm(reps - rep_z[None, :], axis=1)
    order = np.lexsort((members, d))[:m]
    chosen = members[order]
    return TargetSelection(y_adv, train.samples[chosen].astype(np.float64),
                           np.ones(m), chosen)


# ---------------------------------------------------------------------------
# soft-threshold vote objective

def soft_vote_input(candidates, weights, z_hat, eta: float, alpha: float,
                    metric: str = "euclidean"):
    """Soft neighbor-vote count in input space and its gradient w.r.t. z_hat.

    value = sum_i w_i * sigmoid(alpha * (eta - dist(x_i, z_hat))); for the
    cosine metric, distances are Euclidean between unit-normalized vectors and
    the gradient is chained through the normalization of z_hat.
    """
    kern = get_kernels()
    candidates = np.asarray(candidates, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    z_hat = np.asarray(z_hat, dtype=np.float64)
    if metric == "euclidean":
        return kern.soft_vote(candidates, z_hat, weights, eta, alpha)
    norm = np.linalg.norm(z_hat)
    if norm == 0.0:
        raise ValueError("zero-norm query under cosine metric")
    u = z_hat / norm
    value, grad_u = kern.soft_vote(unit_normalize(candidates), u, weights,
                                   eta, alpha)
    grad = (grad_u - u * np.dot(u, grad_u)) / norm
    return value, grad


def normalize_with_grad(R, cot_u):
    """Chain a cotangent on u = r/||r|| back to r, batched over rows."""
    norms = np.linalg.norm(R, axis=1, keepdims=True)
    U = R / norms
    return (cot_u - U * np.sum(U * cot_u, axis=1, keepdims=True)) / norms


def soft_vote_layers(params: nn.NetworkParams, cand_reps, weights, z_hat,
                     etas, alpha: float):
    """Layer-summed soft vote count over normalized representations.

    cand_reps: per layer, (m, width) unit-normalized candidate representations.
    Returns (value, gradient w.r.t. z_hat) with the gradient accumulated in
    reverse mode through the network.
    """
    z_hat = np.asarray(z_hat, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    reps = nn.forward_all_batch(params, z_hat[None, :])
    value = 0.0
    cotangents = []
    for lam, cand in enumerate(cand_reps):
        r = reps[lam][0]
        norm = np.linalg.norm(r)
        if norm == 0.0:
            raise ValueError(f"zero-norm representation at layer {lam}")
        u = r / norm
        diff = cand - u[None, :]
        dist = np.linalg.norm(diff, axis=1)
        s = 1.0 / (1.0 + np.exp(-alpha * (etas[lam] - dist)))
        value += float(np.sum(weights * s))
        coef = weights * s * (1.0 - s) * alpha
        safe = dist > 0.0
        scale = np.where(safe, coef / np.where(safe, dist, 1.0), 0.0)
        cot_u = diff.T @ scale
        cot_r = (cot_u - u * np.dot(u, cot_u)) / norm
        cotangents.append(cot_r[None, :])
    grad = nn.input_gradient_batch(params, z_hat[None, :], cotangents)[0]
    return value, grad


def soft_threshold_objective(points: TargetSelection, z_hat, eta, alpha: float,
                             spaces: str = "input", *, metric: str = "euclidean",
                             params=None, layer_candidate_reps=None):
    """Soft neighbor-vote objective, dispatching on the space it acts in.

    spaces="input": votes are computed directly on the candidate samples (eta
    is a scalar). spaces="layers": votes are summed over normalized network
    representations (eta is one threshold per layer; `params` and the
    per-layer candidate representations are required).
    Returns (value, gradient w.r.t. z_hat).
    """
    if spaces == "input":
        return soft_vote_input(points.candidates, points.weights, z_hat,
                               float(eta), alpha, metric=metric)
    if spaces == "layers":
        if params is None or layer_candidate_reps is None:
            raise ValueError("layer mode needs params and candidate "
                             "representations")
        return soft_vote_layers(params, layer_candidate_reps, points.weights,
                                z_hat, np.asarray(eta, dtype=np.float64), alpha)
    raise ValueError(f"unknown spaces {spaces!r}")


# ---------------------------------------------------------------------------
# tanh box reparameterization

@dataclass(frozen=True)
class BoxReparam:
    lower: np.ndarray
    upper: np.ndarray

    @property
    def frozen(self) -> np.ndarray:
        return self.upper <= self.lower

    def encode(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        span = self.upper - self.lower
        safe_span = np.where(self.frozen, 1.0, span)
        t = 2.0 * (z - self.lower) / safe_span - 1.0
        t = np.clip(t, -_ATANH_CLIP, _ATANH_CLIP)
        return np.where(self.frozen, 0.0, np.arctanh(t))

    def decode(self, v) -> np.ndarray:
        z = 0.5 * (np.tanh(v) + 1.0) * (self.upper - self.lower) + self.lower
        return np.where(self.frozen, self.lower, z)

    def decode_grad(self, v) -> np.ndarray:
        """d decode / d v, elementwise; zero on frozen coordinates."""
        th = np.tanh(v)
        g = 0.5 * (1.0 - th * th) * (self.upper - self.lower)
        return np.where(self.frozen, 0.0, g)


def box_for(z, eps: float, norm: str) -> BoxReparam:
    """Pixel bounds: [0,1] for l2 (budget via penalty); the eps-ball
    intersected with [0,1] for linf."""
    z = np.asarray(z, dtype=np.float64)
    if norm == "linf":
        return BoxReparam(np.maximum(0.0, z - eps), np.minimum(1.0, z + eps))
    return BoxReparam(np.zeros_like(z), np.ones_like(z))


# ---------------------------------------------------------------------------
# Adam

class Adam:
    def __init__(self, shape, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)

    def step(self, grad) -> np.ndarray:
        """Return the update to subtract from the parameters."""
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# penalty-coefficient search

def bracket_step(c, c_lo, c_hi, success):
    """One multiplicative bracketing update on the penalty weight.

    Success raises c (tighter distortion), failure lowers it; once both sides
    are seen, step to the geometric mean; factor 10 while unbracketed.
    """
    if success:
        c_lo = c
    else:
        c_hi = c
    if c_lo is not None and c_hi is not None:
        nxt = math.sqrt(c_lo * c_hi)
    elif c_lo is not None:
        nxt = c_lo * 10.0
    else:
        nxt = c_hi / 10.0
    return nxt, c_lo, c_hi


def penalty_binary_search(run_attack, c_init: float, steps: int = 5) -> AttackResult:
    """Probe `steps` penalty weights starting at c_init; keep the successful
    result with the smallest l2 distortion, else the last failure."""
    c, c_lo, c_hi = float(c_init), None, None
    best = None
    last = None
    for _ in range(steps):
        result = run_attack(c)
        result.final_c = c
        last = result
        if result.success and (best is None or
                               result.l2_distortion < best.l2_distortion):
            best = result
        c, c_lo, c_hi = bracket_step(c, c_lo, c_hi, result.success)
    return best if best is not None else last
