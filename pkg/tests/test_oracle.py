import numpy as np
import pytest

from srstlab import oracle
from srstlab.oracle import BinaryInstance, FiniteInstance


def two_point_instance():
    """Point 0 can reach point 1 (other class); point 1 is isolated."""
    return FiniteInstance(
        neighborhoods=((0, 1), (1,)),
        classifier=np.array([0, 1]),
        conditionals=np.array([[1.0, 0.0], [1.0, 0.0]]),
        marginal=np.array([0.5, 0.5]))


def three_class_instance():
    """Point 0 reaches flips into two different classes."""
    return FiniteInstance(
        neighborhoods=((0, 1, 2), (1,), (2,)),
        classifier=np.array([0, 1, 2]),
        conditionals=np.array([[0.2, 0.5, 0.3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
        marginal=np.array([1.0, 0.0, 0.0]))


class TestValidation:
    def test_ball_must_contain_self(self):
        with pytest.raises(ValueError, match="contain the point"):
            FiniteInstance(neighborhoods=((1,), (1,)), classifier=np.array([0, 1]),
                           conditionals=np.eye(2), marginal=np.array([0.5, 0.5]))

    def test_ball_ids_in_range(self):
        with pytest.raises(ValueError, match="outside"):
            FiniteInstance(neighborhoods=((0, 5), (1,)), classifier=np.array([0, 1]),
                           conditionals=np.eye(2), marginal=np.array([0.5, 0.5]))

    def test_conditionals_must_be_rows_on_simplex(self):
        with pytest.raises(ValueError, match="sum to one"):
            FiniteInstance(neighborhoods=((0,), (1,)), classifier=np.array([0, 1]),
                           conditionals=np.array([[0.5, 0.2], [1.0, 0.0]]),
                           marginal=np.array([0.5, 0.5]))

    def test_marginal_must_be_distribution(self):
        with pytest.raises(ValueError, match="marginal"):
            FiniteInstance(neighborhoods=((0,), (1,)), classifier=np.array([0, 1]),
                           conditionals=np.eye(2), marginal=np.array([0.9, 0.5]))

    def test_classifier_labels_in_range(self):
        with pytest.raises(ValueError, match="classifier"):
            FiniteInstance(neighborhoods=((0,), (1,)), classifier=np.array([0, 2]),
                           conditionals=np.eye(2), marginal=np.array([0.5, 0.5]))

    def test_binary_lam_positive(self):
        with pytest.raises(ValueError, match="lam"):
            BinaryInstance(scores=np.array([1.0]), neighborhoods=((0,),),
                           cond_pos=np.array([0.5]), marginal=np.array([1.0]), lam=0.0)


class TestExactRisks:
    def test_two_point_hand_values(self):
        rep = oracle.exact_risks(two_point_instance())
        assert rep.r_nat == pytest.approx(0.5, abs=1e-15)
        assert rep.r_bdy == pytest.approx(0.5, abs=1e-15)
        assert rep.r_rob == pytest.approx(1.0, abs=1e-15)
        assert rep.bound_neighbor_mismatch == pytest.approx(1.0, abs=1e-15)
        assert rep.bound_self_match == pytest.approx(1.0, abs=1e-15)

    def test_singleton_balls_mean_no_boundary(self):
        inst = FiniteInstance(neighborhoods=((0,), (1,)), classifier=np.array([0, 1]),
                              conditionals=np.array([[0.7, 0.3], [0.1, 0.9]]),
                              marginal=np.array([0.5, 0.5]))
        rep = oracle.exact_risks(inst)
        assert rep.r_bdy == 0.0
        assert rep.r_rob == pytest.approx(rep.r_nat, abs=1e-15)
        assert rep.bound_neighbor_mismatch == pytest.approx(rep.r_nat, abs=1e-15)

    def test_decomposition_and_bounds_random(self):
        for seed in range(150):
            n = 2 + seed % 9
            C = 2 + seed % 3
            inst = oracle.random_instance(seed, n, C, (seed % 10) / 10.0)
            for tie in oracle.TIE_BREAKS:
                rep = oracle.exact_risks(inst, tie)
                assert abs(rep.r_nat + rep.r_bdy - rep.r_rob) <= 1e-12
                assert rep.r_rob <= rep.bound_neighbor_mismatch + 1e-12
                assert rep.r_rob <= rep.bound_self_match + 1e-12


class TestWorstCasePoint:
    def test_no_flip_returns_self(self):
        inst = two_point_instance()
        assert oracle.worst_case_point(inst, 1) == 1

    def test_tie_breaks(self):
        inst = three_class_instance()
        assert oracle.worst_case_point(inst, 0, "lowest") == 1
        assert oracle.worst_case_point(inst, 0, "highest") == 2

    def test_unknown_tie_break_rejected(self):
        with pytest.raises(ValueError):
            oracle.worst_case_point(two_point_instance(), 0, "random")


class TestBoundaryEvent:
    def test_boundary_vs_literal_three_class_gap(self):
        # boundary event: P(Y = own class) = 0.2 <= 0.5 = bound term;
        # the literal flip-mismatch event sums to 1.0 and overshoots it
        inst = three_class_instance()
        boundary = oracle.boundary_term_pairs(inst, event="boundary")
        literal = oracle.boundary_term_pairs(inst, event="flip_mismatch")
        assert boundary[0, 0] == pytest.approx(0.2, abs=1e-15)
        assert boundary[0, 1] == pytest.approx(0.5, abs=1e-15)
        assert boundary[0, 0] <= boundary[0, 1]
        assert literal[0, 0] == pytest.approx(1.0, abs=1e-15)
        assert literal[0, 0] > literal[0, 1]

    def test_boundary_event_never_exceeds_bound(self):
        for seed in range(120):
            n = 2 + seed % 8
            C = 2 + seed % 3
            inst = oracle.random_instance(seed + 1000, n, C, 0.1 + (seed % 9) / 10.0)
            for tie in oracle.TIE_BREAKS:
                pairs = oracle.boundary_term_pairs(inst, tie)
                assert np.all(pairs[:, 0] <= pairs[:, 1] + 1e-12)

    def test_two_class_equality(self):
        for seed in range(60):
            inst = oracle.random_instance(seed + 2000, 2 + seed % 8, 2, 0.5)
            pairs = oracle.boundary_term_pairs(inst)
            np.testing.assert_allclose(pairs[:, 0], pairs[:, 1], atol=1e-12)
            literal = oracle.boundary_term_pairs(inst, event="flip_mismatch")
            np.testing.assert_allclose(pairs, literal, atol=1e-12)


class TestBinary:
    def test_surrogate_values(self):
        assert oracle.surrogate(0.0) == pytest.approx(1.0, abs=1e-15)
        assert float(oracle.surrogate(50.0)) < 1e-6
        # dominates the margin indicator everywhere
        t = np.linspace(-5, 5, 201)
        assert np.all(oracle.surrogate(t) >= (t <= 0.0) - 1e-15)

    def test_sign_zero_is_positive(self):
        inst = BinaryInstance(scores=np.array([0.0, -1.0]), neighborhoods=((0,), (1,)),
                              cond_pos=np.array([0.5, 0.5]), marginal=np.array([0.5, 0.5]))
        np.testing.assert_array_equal(inst.signs(), [1, -1])

    def test_isolated_points_bound_chain(self):
        inst = BinaryInstance(scores=np.array([2.0, -3.0]), neighborhoods=((0,), (1,)),
                              cond_pos=np.array([0.9, 0.2]), marginal=np.array([0.5, 0.5]),
                              lam=1.0)
        rep = oracle.binary_bounds(inst)
        # no flips anywhere: robust risk equals the 0/1 natural risk
        assert rep["r_rob"] == pytest.approx(0.5 * 0.1 + 0.5 * 0.2, abs=1e-12)
        assert rep["r_rob"] <= rep["bound_neighbor_mismatch"] + 1e-12
        assert rep["r_rob"] <= rep["bound_self_match"] + 1e-12
        assert max(rep["bound_neighbor_mismatch"],
                   rep["bound_self_match"]) <= rep["bound_trades"] + 1e-12

    def test_bound_chain_random(self):
        for seed in range(100):
            inst = oracle.random_binary_instance(seed, 2 + seed % 10,
                                                 (seed % 10) / 10.0,
                                                 lam=[0.5, 1.0, 5.0][seed % 3])
            for tie in oracle.TIE_BREAKS:
                rep = oracle.binary_bounds(inst, tie)
                assert rep["r_rob"] <= rep["bound_neighbor_mismatch"] + 1e-12
                assert rep["r_rob"] <= rep["bound_self_match"] + 1e-12
                assert rep["bound_neighbor_mismatch"] <= rep["bound_trades"] + 1e-12
                assert rep["bound_self_match"] <= rep["bound_trades"] + 1e-12


class TestGenerators:
    def test_density_extremes(self):
        singles = oracle.random_instance(0, 6, 3, 0.0)
        assert all(ball == (i,) for i, ball in enumerate(singles.neighborhoods))
        full = oracle.random_instance(0, 6, 3, 1.0)
        assert all(ball == tuple(range(6)) for ball in full.neighborhoods)

    def test_seed_reproducibility(self):
        a = oracle.random_instance(42, 8, 3, 0.4)
        b = oracle.random_instance(42, 8, 3, 0.4)
        assert a.neighborhoods == b.neighborhoods
        np.testing.assert_array_equal(a.classifier, b.classifier)
        np.testing.assert_array_equal(a.conditionals, b.conditionals)

    def test_symmetric_balls(self):
        inst = oracle.random_instance(3, 10, 2, 0.3, symmetric=True)
        for i, ball in enumerate(inst.neighborhoods):
            for j in ball:
                assert i in inst.neighborhoods[j]


class TestSweeps:
    def test_instance_sweep_all_green(self):
        records = oracle.instance_sweep(range(50))
        assert len(records) == 50
        for rec in records:
            assert rec["decomposition_ok"]
            assert rec["bounds_ok"]
            assert rec["bounds_alt_ok"]
            assert rec["pointwise_ok"]
            assert rec["pointwise_binary_equal"]

    def test_binary_sweep_all_green(self):
        records = oracle.binary_sweep(range(30))
        assert len(records) == 90  # three lambdas each
        for rec in records:
            assert rec["bounds_ok"]
            assert rec["bounds_alt_ok"]
            assert rec["trades_dominates"]

    def test_sweep_records_are_json_ready(self):
        import json
        json.dumps(oracle.instance_sweep(range(3)) + oracle.binary_sweep(range(2)))
