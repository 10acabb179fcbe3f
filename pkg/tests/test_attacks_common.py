import numpy as np
import pytest

from knnadv import datasets, nn
from knnadv.attacks import (AttackConfig, load_config, save_config,
                            BoxReparam, box_for, bracket_step,
                            penalty_binary_search, make_result,
                            select_target_class, select_candidates,
                            soft_vote_input, soft_vote_layers,
                            soft_threshold_objective, TargetSelection)
from knnadv.attacks.common import normalize_with_grad


class TestAttackConfig:
    def test_defaults(self):
        cfg = AttackConfig()
        assert cfg.norm == "l2" and cfg.eps == 0.0 and cfg.c_init == 1.0
        assert cfg.alpha == 4.0 and cfg.max_iterations == 400
        assert cfg.check_iterations == (320, 360, 400)
        assert cfg.binary_search_steps == 5

    def test_validation(self):
        with pytest.raises(ValueError):
            AttackConfig(norm="l1")
        with pytest.raises(ValueError):
            AttackConfig(eps=-0.1)
        with pytest.raises(ValueError):
            AttackConfig(check_iterations=(500,))

    def test_file_round_trip(self, tmp_path):
        cfg = AttackConfig(norm="linf", eps=0.25, alpha=2.0, m=30,
                           max_iterations=100, check_iterations=(80, 100),
                           seed=3)
        path = tmp_path / "attack.cfg"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / "attack.cfg"
        path.write_text("# attack settings\n\nnorm = linf  # comment\neps = 0.1\n")
        cfg = load_config(path)
        assert cfg.norm == "linf" and cfg.eps == 0.1

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "attack.cfg"
        path.write_text("strength = 11\n")
        with pytest.raises(ValueError):
            load_config(path)

    def test_overrides(self):
        cfg = AttackConfig().with_overrides(eps=0.2, norm="linf", m=None)
        assert cfg.eps == 0.2 and cfg.norm == "linf" and cfg.m is None


class TestBoxReparam:
    def test_decode_always_inside_unit_box(self, rng):
        box = box_for(rng.random((4, 6)), 0.0, "l2")
        for _ in range(2500):
            z = box.decode(rng.normal(scale=5.0, size=(4, 6)))
            assert z.min() >= 0.0 and z.max() <= 1.0

    def test_linf_box_is_eps_ball_intersect_unit(self, rng):
        z = rng.random((3, 5))
        box = box_for(z, 0.1, "linf")
        np.testing.assert_allclose(box.lower, np.maximum(0.0, z - 0.1))
        np.testing.assert_allclose(box.upper, np.minimum(1.0, z + 0.1))
        decoded = box.decode(rng.normal(size=(3, 5)))
        assert np.max(np.abs(decoded - z)) <= 0.1 + 1e-12

    def test_encode_decode_inverse_inside_box(self, rng):
        z = 0.2 + 0.6 * rng.random((2, 4))
        box = box_for(z, 0.0, "l2")
        np.testing.assert_allclose(box.decode(box.encode(z)), z, atol=1e-9)

    def test_frozen_coordinates(self):
        box = BoxReparam(np.array([0.3, 0.0]), np.array([0.3, 1.0]))
        v = box.encode(np.array([0.3, 0.5]))
        assert v[0] == 0.0
        assert box.decode(np.array([99.0, 0.0]))[0] == 0.3
        assert box.decode_grad(np.array([0.0, 0.0]))[0] == 0.0

    def test_decode_grad_matches_finite_differences(self, rng):
        box = box_for(rng.random(6), 0.0, "l2")
        v = rng.normal(size=6)
        h = 1e-6
        fd = (box.decode(v + h) - box.decode(v - h)) / (2 * h)
        np.testing.assert_allclose(box.decode_grad(v), fd, rtol=1e-5)


class TestBracketAndPenaltySearch:
    def test_bracket_trace(self):
        """Succeed iff c <= 3: probes follow the x10 / geometric-mean rule."""
        seen = []

        def run(c):
            seen.append(c)
            return make_result(np.zeros(2), np.full(2, 0.1 / c), c <= 3.0)

        result = penalty_binary_search(run, 1.0, steps=5)
        expected = [1.0, 10.0, 10.0 ** 0.5, 10.0 ** 0.25, 10.0 ** 0.375]
        np.testing.assert_allclose(seen, expected, rtol=1e-12)
        assert result.success
        # the successful probe with the largest c gives the smallest l2 here
        assert result.final_c == pytest.approx(10.0 ** 0.375)

    def test_all_failures_returns_last(self):
        cs = []

        def run(c):
            cs.append(c)
            return make_result(np.zeros(2), np.ones(2), False)

        result = penalty_binary_search(run, 1.0, steps=3)
        assert not result.success
        assert result.final_c == cs[-1]
        np.testing.assert_allclose(cs, [1.0, 0.1, 0.01])

    def test_bracket_step_geometric_mean_once_bracketed(self):
        c, lo, hi = bracket_step(4.0, 2.0, None, False)
        assert (lo, hi) == (2.0, 4.0)
        assert c == pytest.approx(np.sqrt(8.0))


class TestTargetSelection:
    def test_target_class_is_nearest_foreign_mean(self):
        train = datasets.synth_blobs(0, 40, 3, 8, 0.05)
        z = train.samples[train.labels == 0][0].astype(np.float64)
        y_adv = select_target_class(train, z, 0)
        assert y_adv in (1, 2)
        means = np.stack([train.samples[train.labels == c].mean(axis=0)
                          for c in range(3)])
        d = np.linalg.norm(means - z, axis=1)
        d[0] = np.inf
        assert y_adv == np.argmin(d)

    def test_candidates_are_m_nearest_of_target_class(self, rng):
        train = datasets.synth_blobs(1, 30, 3, 6, 0.2)
        z = rng.random(6)
        sel = select_candidates(train, z, 1, 5)
        assert sel.candidates.shape == (5, 6)
        assert np.all(train.labels[sel.candidate_indices] == 1)
        d = np.linalg.norm(train.samples[train.labels == 1] - z, axis=1)
        np.testing.assert_allclose(
            np.sort(np.linalg.norm(sel.candidates - z, axis=1)),
            np.sort(d)[:5], atol=1e-6)

    def test_too_few_members_raises(self, rng):
        train = datasets.synth_blobs(0, 3, 2, 4, 0.1)
        with pytest.raises(ValueError):
            select_candidates(train, rng.random(4), 0, 5)


class TestSoftVote:
    def test_value_at_threshold_distance_is_half(self):
        cand = np.array([[1.0, 0.0]])
        value, _ = soft_vote_input(cand, np.ones(1), np.zeros(2), eta=1.0,
                                   alpha=4.0)
        assert value == pytest.approx(0.5)

    def test_value_saturates_to_m_when_all_inside(self):
        cand = np.tile(np.array([[0.1, 0.1]]), (6, 1))
        value, _ = soft_vote_input(cand, np.ones(6), np.zeros(2), eta=1.0,
                                   alpha=200.0)
        assert value == pytest.approx(6.0, abs=1e-4)

    def test_input_gradient_matches_finite_differences(self, rng):
        cand = rng.random((8, 5))
        w = np.ones(8)
        h = 1e-4
        for _ in range(20):
            z = rng.random(5)
            _, grad = soft_vote_input(cand, w, z, 0.5, 4.0)
            fd = np.empty(5)
            for j in range(5):
                e = np.zeros(5)
                e[j] = h
                fd[j] = (soft_vote_input(cand, w, z + e, 0.5, 4.0)[0]
                         - soft_vote_input(cand, w, z - e, 0.5, 4.0)[0]) / (2 * h)
            np.testing.assert_allclose(grad, fd, rtol=1e-4, atol=1e-10)

    def test_cosine_gradient_matches_finite_differences(self, rng):
        cand = rng.random((6, 4)) + 0.1
        w = np.ones(6)
        h = 1e-4
        for _ in range(20):
            z = rng.random(4) + 0.1
            _, grad = soft_vote_input(cand, w, z, 0.3, 4.0, metric="cosine")
            fd = np.empty(4)
            for j in range(4):
                e = np.zeros(4)
                e[j] = h
                fd[j] = (soft_vote_input(cand, w, z + e, 0.3, 4.0, "cosine")[0]
                         - soft_vote_input(cand, w, z - e, 0.3, 4.0,
                                           "cosine")[0]) / (2 * h)
            np.testing.assert_allclose(grad, fd, rtol=1e-4, atol=1e-10)

    def test_layer_mode_gradient_matches_finite_differences(self, rng):
        params = nn.init_params(nn.NetworkSpec(5, (8, 6, 3)), seed=2)
        cand_reps = []
        pool = rng.random((4, 5))
        reps = nn.forward_all_batch(params, pool)
        for r in reps:
            norms = np.linalg.norm(r, axis=1, keepdims=True)
            cand_reps.append(r / norms)
        w = np.ones(4)
        etas = np.array([0.5, 0.4, 0.3])
        h = 1e-4
        checked = 0
        for _ in range(40):
            z = rng.random(5)
            value, grad = soft_vote_layers(params, cand_reps, w, z, etas, 4.0)
            fd = np.empty(5)
            for j in range(5):
                e = np.zeros(5)
                e[j] = h
                fd[j] = (soft_vote_layers(params, cand_reps, w, z + e, etas,
                                          4.0)[0]
                         - soft_vote_layers(params, cand_reps, w, z - e, etas,
                                            4.0)[0]) / (2 * h)
            if np.linalg.norm(fd) < 1e-8:
                continue
            np.testing.assert_allclose(grad, fd, rtol=2e-4, atol=1e-8)
            checked += 1
        assert checked >= 20

    def test_dispatch_wrapper_matches_direct_calls(self, rng):
        cand = rng.random((5, 4))
        sel = TargetSelection(1, cand, np.ones(5), np.arange(5))
        z = rng.random(4)
        v1, g1 = soft_threshold_objective(sel, z, 0.5, 4.0, spaces="input")
        v2, g2 = soft_vote_input(cand, np.ones(5), z, 0.5, 4.0)
        assert v1 == v2
        np.testing.assert_array_equal(g1, g2)
        with pytest.raises(ValueError):
            soft_threshold_objective(sel, z, 0.5, 4.0, spaces="layers")


class TestNormalizeWithGrad:
    def test_matches_finite_differences(self, rng):
        cot = rng.random((1, 4))
        h = 1e-6
        r = rng.random(4) + 0.2

        def f(x):
            return float(cot[0] @ (x / np.linalg.norm(x)))

        grad = normalize_with_grad(r[None, :], cot)[0]
        fd = np.empty(4)
        for j in range(4):
            e = np.zeros(4)
            e[j] = h
            fd[j] = (f(r + e) - f(r - e)) / (2 * h)
        np.testing.assert_allclose(grad, fd, rtol=1e-5)


class TestMakeResult:
    def test_distortions(self):
        r = make_result(np.zeros(4), np.array([0.3, 0.0, -0.4, 0.0]), True)
        assert r.l2_distortion == pytest.approx(0.5)
        assert r.linf_distortion == pytest.approx(0.4)
        np.testing.assert_allclose(r.delta, [0.3, 0.0, -0.4, 0.0])
