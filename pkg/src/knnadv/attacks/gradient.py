"""Gradient-based attacks on kNN and DkNN.

All three attacks share one batched first-order engine: Adam on a tanh-box
reparameterized variable, misclassification checks only at the configured
iterations, and (for the l2 norm) a squared-norm penalty whose weight is
tuned by multiplicative bracketing.
"""

import numpy as np

from knnadv import nn
from knnadv.datasets import LabeledDataset
from knnadv.knn import KnnModel, knn_predict_batch, estimate_eta, unit_normalize
from knnadv.dknn import DknnModel, dknn_labels, dknn_predict_batch
from knnadv.attacks.config import AttackConfig
from knnadv.attacks.common import (AttackResult, make_result, Adam, BoxReparam,
                                   box_for, bracket_step, normalize_with_grad,
                                   select_target_class, select_candidates,
                                   select_candidates_layer1)


def _sigmoid(t):
    return 1.0 / (1.0 + np.exp(-t))


def _soft_vote_batch(cand, w, U, eta, alpha):
    """Batched soft vote: cand (B,m,dim), U (B,dim). Returns value (B,) and
    cotangent on U (B,dim)."""
    diff = cand - U[:, None, :]
    dist = np.sqrt(np.maximum(np.sum(diff * diff, axis=2), 0.0))
    s = _sigmoid(alpha * (eta - dist))
    value = np.sum(w * s, axis=1)
    coef = w * s * (1.0 - s) * alpha
    safe = dist > 0.0
    scale = np.where(safe, coef / np.where(safe, dist, 1.0), 0.0)
    cot = np.einsum("bmd,bm->bd", diff, scale)
    return value, cot


class KnnVoteObjective:
    """Negated soft vote count toward the candidate set, in input space."""

    def __init__(self, candidates, weights, eta, alpha, metric):
        self.cand = np.asarray(candidates, dtype=np.float64)  # (B, m, d)
        if metric == "cosine":
            norms = np.linalg.norm(self.cand, axis=2, keepdims=True)
            self.cand = self.cand / norms
        self.w = np.asarray(weights, dtype=np.float64)
        self.eta = float(eta)
        self.alpha = float(alpha)
        self.metric = metric

    def __call__(self, Zhat):
        if self.metric == "cosine":
            U = unit_normalize(Zhat)
            value, cot_u = _soft_vote_batch(self.cand, self.w, U,
                                            self.eta, self.alpha)
            grad = normalize_with_grad(Zhat, cot_u)
        else:
            value, grad = _soft_vote_batch(self.cand, self.w, Zhat,
                                           self.eta, self.alpha)
        return -value, -grad


class DknnVoteObjective:
    """Negated layer-summed soft vote count over normalized representations."""

    def __init__(self, params, cand_reps, weights, etas, alpha):
        self.params = params
        self.cand_reps = cand_reps  # per layer: (B, m, width), unit rows
        self.w = np.asarray(weights, dtype=np.float64)
        self.etas = np.asarray(etas, dtype=np.float64)
        self.alpha = float(alpha)

    def __call__(self, Zhat):
        reps = nn.forward_all_batch(self.params, Zhat)
        value = np.zeros(Zhat.shape[0])
        cotangents = []
        for lam, cand in enumerate(self.cand_reps):
            U = unit_normalize(reps[lam])
            val, cot_u = _soft_vote_batch(cand, self.w, U,
                                          self.etas[lam], self.alpha)
            value += val
            cotangents.append(normalize_with_grad(reps[lam], cot_u))
        grad = nn.input_gradient_batch(self.params, Zhat, cotangents)
        return -value, -grad


class GuideObjective:
    """Squared distance between first-layer representations of z_hat and a
    per-sample guide, in the normalized (cosine) space."""

    def __init__(self, params, guide_reps):
        self.params = params
        self.guides = np.asarray(guide_reps, dtype=np.float64)  # (B, width)

    def __call__(self, Zhat):
        reps = nn.forward_all_batch(self.params, Zhat)
        U = unit_normalize(reps[0])
        diff = U - self.guides
        value = np.sum(diff * diff, axis=1)
        cotangents = [normalize_with_grad(reps[0], 2.0 * diff)]
        cotangents += [None] * (len(self.params.weights) - 1)
        grad = nn.input_gradient_batch(self.params, Zhat, cotangents)
        return value, grad


def optimize_batch(objective, Z, y_z, cfg: AttackConfig, classify_batch,
                   c=None, z_init=None):
    """Run the shared Adam/tanh-box loop on a batch.

    Returns (success (B,), z_hat (B,d), iterations_used (B,)). `c` is the
    per-sample l2 penalty weight (ignored for linf). Samples stop being
    updated at their first successful misclassification check.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y_z = np.asarray(y_z, dtype=np.int64)
    B, d = Z.shape
    box = box_for(Z, cfg.eps, cfg.norm)
    v = box.encode(Z if z_init is None else np.asarray(z_init, dtype=np.float64))
    adam = Adam((B, d), lr=cfg.learning_rate)
    success = np.zeros(B, dtype=bool)
    z_out = box.decode(v).copy()
    iters = np.zeros(B, dtype=np.int64)
    active = np.ones(B, dtype=bool)
    checks = set(cfg.check_iterations)
    eps_sq = cfg.eps * cfg.eps
    for t in range(1, cfg.max_iterations + 1):
        Zhat = box.decode(v)
        loss, grad = objective(Zhat)
        if cfg.norm == "l2":
            delta = Zhat - Z
            excess = np.sum(delta * delta, axis=1) - eps_sq
            over = excess > 0.0
            loss = loss + np.asarray(c) * np.maximum(excess, 0.0)
            grad = grad + (np.asarray(c) * over)[:, None] * 2.0 * delta
        bad = ~np.isfinite(loss)
        if bad.any():
            active &= ~bad
        gv = grad * box.decode_grad(v)
        gv[~active] = 0.0
        v = v - adam.step(gv)
        if t in checks and active.any():
            Zcur = box.decode(v)
            rows = np.flatnonzero(active)
            labels = classify_batch(Zcur[rows])
            hit = labels != y_z[rows]
            won = rows[hit]
            success[won] = True
            z_out[won] = Zcur[won]
            iters[won] = t
            active[won] = False
            if not active.any():
                break
    rest = np.flatnonzero(~success)
    final = box.decode(v)
    z_out[rest] = final[rest]
    iters[rest] = cfg.max_iterations
    return success, z_out, iters


def _with_penalty_search(objective, Z, y_z, cfg, classify_batch, z_init=None):
    """l2 attacks: bracket the penalty weight per sample, keeping the
    successful iterate with the smallest l2 distortion."""
    B = Z.shape[0]
    c = np.full(B, cfg.c_init)
    c_lo = [None] * B
    c_hi = [None] * B
    best_z = np.asarray(Z, dtype=np.float64).copy()
    best_l2 = np.full(B, np.inf)
    best_c = np.full(B, np.nan)
    best_iters = np.zeros(B, dtype=np.int64)
    any_success = np.zeros(B, dtype=bool)
    last_z = best_z.copy()
    last_iters = np.zeros(B, dtype=np.int64)
    for _ in range(cfg.binary_search_steps):
        success, z_hat, iters = optimize_batch(objective, Z, y_z, cfg,
                                               classify_batch, c=c,
                                               z_init=z_init)
        l2 = np.linalg.norm(z_hat - Z, axis=1)
        improved = success & (l2 < best_l2)
        best_z[improved] = z_hat[improved]
        best_l2[improved] = l2[improved]
        best_c[improved] = c[improved]
        best_iters[improved] = iters[improved]
        any_success |= success
        last_z, last_iters = z_hat, iters
        for b in range(B):
            c[b], c_lo[b], c_hi[b] = bracket_step(c[b], c_lo[b], c_hi[b],
                                                  bool(success[b]))
    z_out = np.where(any_success[:, None], best_z, last_z)
    iters = np.where(any_success, best_iters, last_iters)
    final_c = np.where(any_success, best_c, c)
    return any_success, z_out, iters, final_c


def _run(objective, Z, y_z, cfg, classify_batch, z_init=None):
    if cfg.norm == "l2":
        return _with_penalty_search(objective, Z, y_z, cfg, classify_batch,
                                    z_init=z_init)
    success, z_hat, iters = optimize_batch(objective, Z, y_z, cfg,
                                           classify_batch,
                                           c=np.full(Z.shape[0], cfg.c_init),
                                           z_init=z_init)
    return success, z_hat, iters, np.full(Z.shape[0], np.nan)


def _results(Z, y_z, success, z_hat, iters, final_c, trivial):
    out = []
    for b in range(Z.shape[0]):
        if trivial[b]:
            out.append(make_result(Z[b], Z[b], True))
        else:
            fc = None if np.isnan(final_c[b]) else float(final_c[b])
            out.append(make_result(Z[b], z_hat[b], success[b],
                                   iterations_used=int(iters[b]), final_c=fc))
    return out


def knn_gradient_attack_batch(model: KnnModel, Z, y_z, cfg: AttackConfig):
    """Soft-vote gradient attack on a kNN classifier, batched over samples."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    y_z = np.atleast_1d(np.asarray(y_z, dtype=np.int64))
    train = LabeledDataset(np.clip(model.points, 0.0, 1.0).astype(np.float32),
                           model.labels, model.class_count)
    m = cfg.m or model.k
    eta = estimate_eta(model)
    classify = lambda X: knn_predict_batch(model, X)
    trivial = knn_predict_batch(model, Z) != y_z
    cand = np.empty((Z.shape[0], m, Z.shape[1]))
    for b in range(Z.shape[0]):
        y_adv = select_target_class(train, Z[b], int(y_z[b]))
        cand[b] = select_candidates(train, Z[b], y_adv, m,
                                    metric=model.metric).candidates
    objective = KnnVoteObjective(cand, np.ones((Z.shape[0], m)), eta,
                                 cfg.alpha, model.metric)
    success, z_hat, iters, final_c = _run(objective, Z, y_z, cfg, classify)
    return _results(Z, y_z, success, z_hat, iters, final_c, trivial)


def knn_gradient_attack(model: KnnModel, z, y_z: int,
                        cfg: AttackConfig) -> AttackResult:
    return knn_gradient_attack_batch(model, np.asarray(z)[None, :], [y_z], cfg)[0]


def _attach_credibility(model: DknnModel, results):
    hats = np.array([r.z_hat for r in results])
    preds = dknn_predict_batch(model, hats)
    for r, p in zip(results, preds):
        r.credibility = p.credibility
    return results


def dknn_gradient_attack_batch(model: DknnModel, Z, y_z, cfg: AttackConfig,
                               z_init=None):
    """Layer-summed soft-vote gradient attack on DkNN, batched."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    y_z = np.atleast_1d(np.asarray(y_z, dtype=np.int64))
    m = cfg.m or model.k
    etas = model.layer_etas()
    classify = lambda X: dknn_labels(model, X)
    trivial = dknn_labels(model, Z) != y_z
    cand_reps = [np.empty((Z.shape[0], m, idx.points.shape[1]))
                 for idx in model.layer_indexes]
    for b in range(Z.shape[0]):
        y_adv = select_target_class(model.train, Z[b], int(y_z[b]))
        sel = select_candidates_layer1(model, model.train, Z[b], y_adv, m)
        for lam, idx in enumerate(model.layer_indexes):
            cand_reps[lam][b] = idx._search_points[sel.candidate_indices]
    objective = DknnVoteObjective(model.params, cand_reps,
                                  np.ones((Z.shape[0], m)), etas, cfg.alpha)
    success, z_hat, iters, final_c = _run(objective, Z, y_z, cfg, classify,
                                          z_init=z_init)
    return _attach_credibility(model,
                               _results(Z, y_z, success, z_hat, iters,
                                        final_c, trivial))


def dknn_gradient_attack(model: DknnModel, z, y_z: int,
                         cfg: AttackConfig) -> AttackResult:
    return dknn_gradient_attack_batch(model, np.asarray(z)[None, :], [y_z], cfg)[0]


def find_guides(model: DknnModel, Z, y_z):
    """Per sample: the foreign training sample whose first-layer representation
    is closest to that of z. Returns (indices, normalized layer-1 reps)."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    reps = unit_normalize(nn.forward_all_batch(model.params, Z)[0])
    index = model.layer_indexes[0]
    pts = index._search_points
    idx_out = np.empty(Z.shape[0], dtype=np.int64)
    for b in range(Z.shape[0]):
        d = np.linalg.norm(pts - reps[b][None, :], axis=1)
        d[index.labels == y_z[b]] = np.inf
        idx_out[b] = int(np.argmin(d))
    return idx_out, pts[idx_out]


def dknn_baseline_attack_batch(model: DknnModel, Z, y_z, cfg: AttackConfig,
                               z_init=None):
    """Guide-sample attack: pull the first-layer representation toward the
    nearest foreign sample's."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    y_z = np.atleast_1d(np.asarray(y_z, dtype=np.int64))
    classify = lambda X: dknn_labels(model, X)
    trivial = dknn_labels(model, Z) != y_z
    _, guide_reps = find_guides(model, Z, y_z)
    objective = GuideObjective(model.params, guide_reps)
    success, z_hat, iters, final_c = _run(objective, Z, y_z, cfg, classify,
                                          z_init=z_init)
    return _attach_credibility(model,
                               _results(Z, y_z, success, z_hat, iters,
                                        final_c, trivial))


def dknn_baseline_attack(model: DknnModel, z, y_z: int,
                         cfg: AttackConfig) -> AttackResult:
    return dknn_baseline_attack_batch(model, np.asarray(z)[None, :], [y_z], cfg)[0]
