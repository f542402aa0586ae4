import numpy as np
import pytest

from srstlab import attacks, streams
from srstlab.attacks import AttackConfig
from srstlab.diffcore import network
from srstlab.diffcore.network import ParamSet, ScoreNet


def linear_pair_net():
    """Logits (x, -x) on a 1-d input: class 0 wins for x > 0."""
    net = ScoreNet((1, 2))
    params = ParamSet([(np.array([[1.0, -1.0]]), np.array([0.0, 0.0]))])
    return net, params


def random_net(rng, d=3, C=3):
    net = ScoreNet((d, 4, C))
    return net, network.init_params(net, rng)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            AttackConfig(epsilon=-0.1, nu=0.01, steps=1)
        with pytest.raises(ValueError):
            AttackConfig(epsilon=0.1, nu=0.0, steps=1)
        with pytest.raises(ValueError):
            AttackConfig(epsilon=0.1, nu=0.01, steps=-1)
        with pytest.raises(ValueError):
            AttackConfig(epsilon=0.1, nu=0.01, steps=1, inner_loss="fgsm")
        with pytest.raises(ValueError):
            AttackConfig(epsilon=0.1, nu=0.01, steps=1, domain=(1.0, 0.0))

    def test_inner_loss_names(self):
        assert attacks.INNER_LOSSES == ("ce_true_label", "ce_teacher_label",
                                        "kl_from_clean")


class TestProjection:
    def test_clips_to_ball_then_domain(self):
        anchor = np.array([[0.05, 0.5, 0.95]])
        cand = np.array([[-0.5, 0.8, 2.0]])
        out = attacks.project_linf(cand, anchor, 0.1)
        np.testing.assert_allclose(out, [[0.0, 0.6, 1.0]], atol=1e-15)

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        anchor = rng.uniform(0, 1, size=(10, 4))
        cand = anchor + rng.uniform(-1, 1, size=anchor.shape)
        once = attacks.project_linf(cand, anchor, 0.2)
        twice = attacks.project_linf(once, anchor, 0.2)
        np.testing.assert_array_equal(once, twice)

    def test_inside_points_untouched(self):
        anchor = np.array([[0.5]])
        cand = np.array([[0.55]])
        np.testing.assert_array_equal(attacks.project_linf(cand, anchor, 0.1), cand)


class TestPGD:
    def test_hand_walk_1d(self):
        # one step of size 0.1 pushing x toward the boundary of class 0
        net, params = linear_pair_net()
        cfg = AttackConfig(epsilon=0.1, nu=0.1, steps=1, random_start=False)
        out = attacks.pgd(net, params, np.array([[0.5]]), np.array([0]), cfg)
        np.testing.assert_allclose(out.x_adv, [[0.4]], atol=1e-15)

    def test_step_clipped_to_ball(self):
        net, params = linear_pair_net()
        cfg = AttackConfig(epsilon=0.05, nu=0.1, steps=3, random_start=False)
        out = attacks.pgd(net, params, np.array([[0.5]]), np.array([0]), cfg)
        np.testing.assert_allclose(out.x_adv, [[0.45]], atol=1e-15)

    def test_zero_gradient_stays_put(self):
        # both logits identical: inner loss flat, sign(0) must be 0
        net = ScoreNet((1, 2))
        params = ParamSet([(np.array([[1.0, 1.0]]), np.array([0.0, 0.0]))])
        cfg = AttackConfig(epsilon=0.1, nu=0.05, steps=4, random_start=False)
        out = attacks.pgd(net, params, np.array([[0.5]]), np.array([0]), cfg)
        np.testing.assert_array_equal(out.x_adv, [[0.5]])

    def test_steps_zero_without_start_is_identity_copy(self):
        net, params = linear_pair_net()
        x = np.array([[0.3]])
        cfg = AttackConfig(epsilon=0.1, nu=0.05, steps=0, random_start=False)
        out = attacks.pgd(net, params, x, np.array([0]), cfg)
        np.testing.assert_array_equal(out.x_adv, x)
        assert out.x_adv is not x

    def test_random_start_needs_rng(self):
        net, params = linear_pair_net()
        cfg = AttackConfig(epsilon=0.1, nu=0.05, steps=1)
        with pytest.raises(ValueError):
            attacks.pgd(net, params, np.array([[0.5]]), np.array([0]), cfg)

    def test_membership_exact(self):
        rng = np.random.default_rng(1)
        for seed in range(25):
            net, params = random_net(np.random.default_rng(seed))
            x = rng.uniform(0, 1, size=(6, 3))
            y = rng.integers(0, 3, size=6)
            eps = float(rng.uniform(0.01, 0.3))
            cfg = AttackConfig(epsilon=eps, nu=eps / 4, steps=int(rng.integers(0, 5)))
            out = attacks.pgd(net, params, x, y, cfg, streams.stream(seed, "attack-start", 0))
            assert np.all(out.x_adv >= np.maximum(x - eps, 0.0))
            assert np.all(out.x_adv <= np.minimum(x + eps, 1.0))

    def test_reproducible_from_stream(self):
        net, params = random_net(np.random.default_rng(2))
        x = np.random.default_rng(3).uniform(0, 1, size=(5, 3))
        y = np.array([0, 1, 2, 0, 1])
        cfg = AttackConfig(epsilon=0.1, nu=0.025, steps=5)
        a = attacks.pgd(net, params, x, y, cfg, streams.stream(7, "attack-start", 0))
        b = attacks.pgd(net, params, x, y, cfg, streams.stream(7, "attack-start", 0))
        np.testing.assert_array_equal(a.x_adv, b.x_adv)
        np.testing.assert_array_equal(a.loss, b.loss)

    def test_custom_domain_respected(self):
        net, params = linear_pair_net()
        cfg = AttackConfig(epsilon=0.5, nu=0.5, steps=2, random_start=False,
                           domain=(0.2, 0.6))
        out = attacks.pgd(net, params, np.array([[0.25]]), np.array([0]), cfg)
        assert 0.2 <= out.x_adv[0, 0] <= 0.6

    def test_teacher_label_reference(self):
        net, params = random_net(np.random.default_rng(4))
        x = np.random.default_rng(5).uniform(0, 1, size=(4, 3))
        hard = np.array([2, 0, 1, 2])
        cfg = AttackConfig(epsilon=0.1, nu=0.025, steps=3, random_start=False,
                           inner_loss="ce_teacher_label")
        out = attacks.pgd(net, params, x, hard, cfg)
        base = -np.log(np.maximum(
            network.softmax(network.forward_logits(net, params, x))[np.arange(4), hard],
            1e-12))
        assert np.all(out.loss >= base - 1e-12)

    def test_kl_from_clean_reference(self):
        net, params = random_net(np.random.default_rng(6))
        x = np.random.default_rng(7).uniform(0, 1, size=(4, 3))
        clean = network.softmax(network.forward_logits(net, params, x))
        cfg = AttackConfig(epsilon=0.1, nu=0.025, steps=3, random_start=False,
                           inner_loss="kl_from_clean")
        out = attacks.pgd(net, params, x, clean, cfg)
        # divergence from the clean rows starts at zero and only grows
        assert np.all(out.loss >= -1e-12)
        assert out.loss.max() > 0.0

    def test_label_out_of_range_rejected(self):
        net, params = random_net(np.random.default_rng(8))
        cfg = AttackConfig(epsilon=0.1, nu=0.025, steps=1, random_start=False)
        with pytest.raises(ValueError):
            attacks.pgd(net, params, np.zeros((2, 3)), np.array([0, 3]), cfg)


class TestMultiRestart:
    def test_single_restart_matches_pgd(self):
        net, params = random_net(np.random.default_rng(10))
        x = np.random.default_rng(11).uniform(0, 1, size=(5, 3))
        y = np.array([0, 1, 2, 0, 1])
        cfg = AttackConfig(epsilon=0.1, nu=0.025, steps=4)
        one = attacks.pgd(net, params, x, y, cfg, streams.stream(3, "attack-start", 0))
        multi = attacks.multi_restart_pgd(net, params, x, y, cfg, 1,
                                          streams.stream(3, "attack-start", 0))
        np.testing.assert_array_equal(one.x_adv, multi.x_adv)
        np.testing.assert_array_equal(one.loss, multi.loss)

    def test_more_restarts_never_lose_loss(self):
        net, params = random_net(np.random.default_rng(12))
        x = np.random.default_rng(13).uniform(0, 1, size=(8, 3))
        y = np.random.default_rng(14).integers(0, 3, size=8)
        cfg = AttackConfig(epsilon=0.2, nu=0.05, steps=4)
        prev = None
        for restarts in (1, 2, 4):
            out = attacks.multi_restart_pgd(net, params, x, y, cfg, restarts,
                                            streams.stream(9, "attack-start", 0))
            if prev is not None:
                assert np.all(out.loss >= prev - 1e-15)
            prev = out.loss

    def test_restart_count_validated(self):
        net, params = linear_pair_net()
        cfg = AttackConfig(epsilon=0.1, nu=0.05, steps=1, random_start=False)
        with pytest.raises(ValueError):
            attacks.multi_restart_pgd(net, params, np.array([[0.5]]), np.array([0]),
                                      cfg, 0)


class TestRandomSearch:
    def test_membership_and_determinism(self):
        net, params = random_net(np.random.default_rng(20))
        x = np.random.default_rng(21).uniform(0, 1, size=(6, 3))
        y = np.random.default_rng(22).integers(0, 3, size=6)
        a = attacks.random_search_attack(net, params, x, y, 0.15, 50,
                                         streams.stream(4, "attack-start", 0))
        b = attacks.random_search_attack(net, params, x, y, 0.15, 50,
                                         streams.stream(4, "attack-start", 0))
        np.testing.assert_array_equal(a.x_adv, b.x_adv)
        assert np.all(a.x_adv >= np.maximum(x - 0.15, 0.0))
        assert np.all(a.x_adv <= np.minimum(x + 0.15, 1.0))

    def test_zero_queries_is_identity(self):
        net, params = random_net(np.random.default_rng(23))
        x = np.random.default_rng(24).uniform(0, 1, size=(3, 3))
        out = attacks.random_search_attack(net, params, x, np.array([0, 1, 2]), 0.1, 0,
                                           streams.stream(5, "attack-start", 0))
        np.testing.assert_array_equal(out.x_adv, x)

    def test_loss_never_decreases(self):
        net, params = random_net(np.random.default_rng(25))
        x = np.random.default_rng(26).uniform(0, 1, size=(5, 3))
        y = np.random.default_rng(27).integers(0, 3, size=5)
        probs = network.softmax(network.forward_logits(net, params, x))
        base = -np.log(np.maximum(probs[np.arange(5), y], 1e-12))
        out = attacks.random_search_attack(net, params, x, y, 0.2, 100,
                                           streams.stream(6, "attack-start", 0))
        assert np.all(out.loss >= base - 1e-12)
