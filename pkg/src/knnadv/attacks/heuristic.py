"""Heuristic attacks: mean attack and the naive attack (k=1 exact, k>1 greedy)."""

import math

import numpy as np

from knnadv.knn import KnnModel, knn_predict
from knnadv.attacks.common import (AttackResult, make_result, class_means,
                                   select_target_class)


def _bisect_toward(classify, z, target, y_z, steps: int):
    """Smallest probed c in (0,1] with classify((1-c)z + c*target) != y_z.

    Returns (c, z_hat, success); c=1 is probed first as a feasibility check.
    """
    z = np.asarray(z, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if classify(target) == y_z:
        return 1.0, target, False
    lo, hi = 0.0, 1.0
    best = target
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        cand = (1.0 - mid) * z + mid * target
        if classify(cand) != y_z:
            hi, best = mid, cand
        else:
            lo = mid
    return hi, best, True


def mean_attack(classify, train, z, y_z: int, steps: int = 5) -> AttackResult:
    """Move z toward the nearest foreign class mean until the prediction flips.

    `classify` is any label function (kNN, DkNN, or the bare network).
    """
    z = np.asarray(z, dtype=np.float64)
    if classify(z) != y_z:
        return make_result(z, z, True)
    y_adv = select_target_class(train, z, y_z)
    mean = class_means(train)[y_adv]
    c, z_hat, ok = _bisect_toward(classify, z, mean, y_z, steps)
    return make_result(z, z_hat, ok, final_c=c)


def _naive_k1(model: KnnModel, z, y_z, steps):
    classify = lambda x: knn_predict(model, x)
    foreign = np.flatnonzero(model.labels != y_z)
    best = None
    for idx in foreign:
        c, z_hat, ok = _bisect_toward(classify, z, model.points[idx], y_z, steps)
        if ok:
            result = make_result(z, z_hat, True, final_c=c)
            if best is None or result.l2_distortion < best.l2_distortion:
                best = result
    if best is None:
        return make_result(z, z, False)
    return best


def greedy_target_set(model: KnnModel, z, y_z: int):
    """Greedy target set: seed with the nearest foreign sample, then
    repeatedly add the class member closest to the running mean, up to
    ceil(k/2) samples. Returns (y_adv, member indices)."""
    z = np.asarray(z, dtype=np.float64)
    d = np.linalg.norm(model.points - z[None, :], axis=1)
    d[model.labels == y_z] = np.inf
    seed = int(np.argmin(d))
    y_adv = int(model.labels[seed])
    members = np.flatnonzero(model.labels == y_adv)
    target_size = math.ceil(model.k / 2)
    chosen = [seed]
    in_set = {seed}
    while len(chosen) < target_size and len(chosen) < members.size:
        mean = model.points[chosen].mean(axis=0)
        dm = np.linalg.norm(model.points[members] - mean[None, :], axis=1)
        for j in np.argsort(dm, kind="stable"):
            idx = int(members[j])
            if idx not in in_set:
                chosen.append(idx)
                in_set.add(idx)
                break
    return y_adv, np.array(chosen, dtype=np.int64)


def naive_attack(model: KnnModel, z, y_z: int, steps: int = 5) -> AttackResult:
    """k=1: exact search over all foreign points; k>1: greedy set, then move
    toward its mean."""
    z = np.asarray(z, dtype=np.float64)
    classify = lambda x: knn_predict(model, x)
    if classify(z) != y_z:
        return make_result(z, z, True)
    if model.k == 1:
        return _naive_k1(model, z, y_z, steps)
    _, chosen = greedy_target_set(model, z, y_z)
    target = model.points[chosen].mean(axis=0)
    c, z_hat, ok = _bisect_toward(classify, z, target, y_z, steps)
    return make_result(z, z_hat, ok, final_c=c)
