"""Risk estimators: worked examples, invariants, and bound formulas."""

import math

import numpy as np
import pytest
from mpmath import mp, mpf
from sklearn.base import clone

from spatialval.estimators import (
    EstimatorConfig,
    HoldoutRisk,
    KNNRisk,
    LossSample,
    SNNRisk,
    default_k_grid,
    first_form_bound,
    general_dense_bound,
    hoeffding_constant,
    holdout,
    knn_estimate,
    knn_weights,
    second_form_bound,
    snn_estimate,
    snn_objective,
)
from spatialval.exceptions import InputError
from spatialval.geometry import Metric, SiteSet

from conftest import brute_knn_weights, brute_snn, random_euclidean_instance

mp.dps = 40

# loss_bound * sqrt(log(2/delta)/2) at delta=0.1, from a 40-digit evaluation
C_01 = 1.2238734153404083

LINE_VAL = SiteSet.euclidean([0.0, 1.0, 3.0])
LINE_TEST = SiteSet.euclidean([0.4, 2.5])
LINE_LOSSES = LossSample(np.array([0.1, 0.5, 0.3]))


def test_hoeffding_constant_against_mpmath():
    expected = float(mp.sqrt(mpf(1) / 2 * mp.log(mpf(2) / mpf("0.1"))))
    assert hoeffding_constant(0.1, 1.0) == pytest.approx(expected, rel=1e-15)
    assert hoeffding_constant(0.1, 1.0) == pytest.approx(C_01, rel=1e-15)
    assert hoeffding_constant(0.1, 0.0) == 0.0


def test_default_k_grid_is_powers_of_two_with_one():
    assert default_k_grid(1) == (1,)
    assert default_k_grid(10) == (1, 2, 4, 8)
    assert default_k_grid(8000) == (1, 2, 4, 8, 16, 32, 64, 128, 256, 512,
                                    1024, 2048, 4096)


class TestLossSample:
    def test_rejects_out_of_range(self):
        with pytest.raises(InputError):
            LossSample(np.array([0.2, 1.4]), loss_bound=1.0)
        with pytest.raises(InputError):
            LossSample(np.array([-0.1]), loss_bound=1.0)
        with pytest.raises(InputError):
            LossSample(np.array([]))

    def test_values_frozen(self):
        sample = LossSample(np.array([0.2, 0.4]))
        with pytest.raises(ValueError):
            sample.values[0] = 0.9


class TestHoldout:
    def test_mean_of_two(self):
        assert holdout(LossSample(np.array([0.2, 0.4]))).value == pytest.approx(0.3)

    def test_constant_losses_have_zero_se(self):
        est = holdout(LossSample(np.full(10, 0.37)))
        assert est.value == pytest.approx(0.37)
        assert est.diagnostics["holdout_se"] == 0.0

    def test_single_loss_has_no_se(self):
        assert holdout(LossSample(np.array([0.5]))).diagnostics["holdout_se"] is None

    def test_against_fsum_oracle(self, rng):
        values = rng.uniform(0, 1, size=1000)
        est = holdout(LossSample(values))
        mean = math.fsum(values) / 1000
        assert abs(est.value - mean) < 1e-12
        se = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (1000 * 999))
        assert est.diagnostics["holdout_se"] == pytest.approx(se, rel=1e-12)


class TestKnnWeights:
    def test_k1_example(self):
        np.testing.assert_allclose(
            knn_weights(LINE_VAL, LINE_TEST, 1), [0.5, 0.0, 0.5], atol=1e-15
        )

    def test_k2_example(self):
        np.testing.assert_allclose(
            knn_weights(LINE_VAL, LINE_TEST, 2), [0.25, 0.5, 0.25], atol=1e-15
        )

    def test_tie_inclusion(self):
        val = SiteSet.euclidean([0.0, 1.0])
        test = SiteSet.euclidean([0.5])
        np.testing.assert_allclose(knn_weights(val, test, 1), [0.5, 0.5], atol=0)

    def test_simplex_on_random_instances(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            val, test = random_euclidean_instance(rng, max_n=60, max_m=20)
            k = int(rng.integers(1, len(val) + 1))
            w = knn_weights(val, test, k)
            assert w.min() >= 0.0
            assert abs(w.sum() - 1.0) < 1e-10

    def test_k_out_of_range_and_metric_mismatch(self):
        with pytest.raises(InputError):
            knn_weights(LINE_VAL, LINE_TEST, 4)
        with pytest.raises(InputError):
            knn_weights(LINE_VAL, SiteSet([[0.1, 0.3]], Metric.euclidean(2)), 1)


class TestKnnEstimate:
    def test_k1_example(self):
        est = knn_estimate(LINE_LOSSES, LINE_VAL, LINE_TEST, 1)
        assert est.value == pytest.approx(0.2)
        assert est.chosen_k == 1
        assert est.diagnostics["rho_k"] == 0.5

    def test_k2_example(self):
        est = knn_estimate(LINE_LOSSES, LINE_VAL, LINE_TEST, 2)
        assert est.value == pytest.approx(0.35)
        assert est.diagnostics["rho_k"] == 1.5
        assert est.diagnostics["weight_l2"] == pytest.approx(
            math.sqrt(0.25**2 + 0.5**2 + 0.25**2)
        )

    def test_k_equal_n_equals_holdout(self, rng):
        losses = LossSample(rng.uniform(0, 1, size=15))
        val = SiteSet.euclidean(rng.uniform(0, 1, size=(15, 2)))
        test = SiteSet.euclidean(rng.uniform(0, 1, size=(6, 2)))
        est = knn_estimate(losses, val, test, 15)
        assert est.value == pytest.approx(holdout(losses).value, rel=1e-12)

    def test_misaligned_losses_rejected(self):
        with pytest.raises(InputError):
            knn_estimate(LossSample(np.array([0.1, 0.2])), LINE_VAL, LINE_TEST, 1)

    def test_estimates_stay_in_loss_range(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            val, test = random_euclidean_instance(rng, max_n=40, max_m=15)
            losses = LossSample(rng.uniform(0, 1, size=len(val)))
            k = int(rng.integers(1, len(val) + 1))
            value = knn_estimate(losses, val, test, k).value
            assert 0.0 <= value <= losses.loss_bound


SINGLE_TEST = SiteSet.euclidean([0.0])
LADDER_VAL = SiteSet.euclidean([0.1 * (i + 1) for i in range(10)])


class TestSnnObjective:
    def test_worked_example(self):
        out = snn_objective(LADDER_VAL, SINGLE_TEST, 4)
        assert out["rho_k"] == pytest.approx(0.4)
        assert out["weight_l2"] == pytest.approx(0.5)
        assert out["objective"] == pytest.approx(0.4 + C_01 / 2, rel=1e-12)
        assert out["objective"] == pytest.approx(1.0119367076702041, rel=1e-12)

    def test_zero_loss_bound_leaves_fill_term(self):
        out = snn_objective(LADDER_VAL, SINGLE_TEST, 4,
                            EstimatorConfig(loss_bound=0.0))
        assert out["objective"] == out["rho_k"]

    def test_unique_nearest_neighbor_gives_unit_norm(self):
        out = snn_objective(LADDER_VAL, SINGLE_TEST, 1)
        assert out["weight_l2"] == 1.0
        assert out["objective"] == pytest.approx(out["rho_k"] + C_01, rel=1e-12)


class TestSnnEstimate:
    def test_worked_example_selects_k4(self):
        losses = LossSample(np.linspace(0.05, 0.5, 10))
        config = EstimatorConfig(k_grid=(1, 2, 4, 8))
        est = snn_estimate(losses, LADDER_VAL, SINGLE_TEST, config)
        assert est.chosen_k == 4
        # all four objectives, frozen from a 40-digit evaluation
        expected = {1: 1.3238734153404083, 2: 1.0654091913011427,
                    4: 1.0119367076702041, 8: 1.2327045956505713}
        for k, want in expected.items():
            got = snn_objective(LADDER_VAL, SINGLE_TEST, k)["objective"]
            assert got == pytest.approx(want, rel=1e-12)
        assert est.diagnostics["objective"] == pytest.approx(expected[4], rel=1e-12)
        assert est.value == pytest.approx(np.mean(losses.values[:4]))

    def test_test_sites_equal_val_sites_constant_losses(self, rng):
        sites = SiteSet.euclidean(rng.uniform(0, 1, size=(12, 2)))
        losses = LossSample(np.full(12, 0.42))
        est = snn_estimate(losses, sites, sites)
        assert est.value == pytest.approx(0.42, rel=1e-12)

    def test_matches_brute_force_reimplementation(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            val, test = random_euclidean_instance(rng, max_n=50, max_m=15)
            losses = rng.uniform(0, 1, size=len(val))
            config = EstimatorConfig()
            est = snn_estimate(LossSample(losses), val, test, config)
            want_value, want_k, _ = brute_snn(
                losses, val, test, default_k_grid(len(val)), 0.1, 1.0
            )
            assert est.chosen_k == want_k
            assert est.value == pytest.approx(want_value, abs=1e-12)

    def test_certified_bound_reported_when_lipschitz_known(self):
        losses = LossSample(np.linspace(0.05, 0.5, 10))
        config = EstimatorConfig(k_grid=(1, 2, 4, 8), lipschitz=2.0)
        est = snn_estimate(losses, LADDER_VAL, SINGLE_TEST, config)
        want = 2.0 * est.diagnostics["rho_k"] + C_01 * est.diagnostics["weight_l2"]
        assert est.diagnostics["certified_bound"] == pytest.approx(want, rel=1e-12)

    def test_k_grid_must_fit_validation_size(self):
        losses = LossSample(np.array([0.1, 0.2]))
        val = SiteSet.euclidean([0.0, 1.0])
        with pytest.raises(InputError):
            snn_estimate(losses, val, SINGLE_TEST, EstimatorConfig(k_grid=(1, 4)))


class TestPermutationAndIsometry:
    def test_permutation_equivariance(self, rng):
        val, test = random_euclidean_instance(rng, max_n=40, max_m=12)
        losses = rng.uniform(0, 1, size=len(val))
        base = snn_estimate(LossSample(losses), val, test)
        perm = rng.permutation(len(val))
        val_p = SiteSet(val.points[perm], val.metric)
        shuffled = snn_estimate(LossSample(losses[perm]), val_p, test)
        assert shuffled.value == pytest.approx(base.value, abs=1e-12)
        assert shuffled.chosen_k == base.chosen_k

        test_perm = rng.permutation(len(test))
        test_p = SiteSet(test.points[test_perm], test.metric)
        reordered = snn_estimate(LossSample(losses), val, test_p)
        assert reordered.value == pytest.approx(base.value, abs=1e-12)

        held = holdout(LossSample(losses))
        held_p = holdout(LossSample(losses[perm]))
        assert held_p.value == pytest.approx(held.value, abs=1e-12)

    def test_rigid_motion_and_scaling_leave_weights_unchanged(self, rng):
        val_pts = rng.uniform(-1, 1, size=(30, 2))
        test_pts = rng.uniform(-1, 1, size=(10, 2))
        theta = 1.1
        rot = np.array([[math.cos(theta), -math.sin(theta)],
                        [math.sin(theta), math.cos(theta)]])
        shift = np.array([-4.0, 9.0])
        base = knn_weights(SiteSet.euclidean(val_pts), SiteSet.euclidean(test_pts), 3)
        moved = knn_weights(
            SiteSet.euclidean(val_pts @ rot.T + shift),
            SiteSet.euclidean(test_pts @ rot.T + shift),
            3,
        )
        np.testing.assert_allclose(moved, base, atol=1e-12)
        scaled = knn_weights(
            SiteSet.euclidean(3.7 * val_pts), SiteSet.euclidean(3.7 * test_pts), 3
        )
        np.testing.assert_allclose(scaled, base, atol=1e-12)


class TestBounds:
    def test_second_form_worked_example(self):
        got = second_form_bound(LINE_VAL, LINE_TEST, 2, EstimatorConfig(), 1.0)
        assert got == pytest.approx(1.5 + C_01 * math.sqrt(0.5), rel=1e-12)
        assert got == pytest.approx(2.3654091913011427, rel=1e-12)

    def test_second_form_single_test_unique_neighbor(self):
        got = second_form_bound(LADDER_VAL, SINGLE_TEST, 1, EstimatorConfig(), 1.0)
        rho1 = 0.1
        assert got == pytest.approx(rho1 + C_01 * math.sqrt(1.0), rel=1e-12)

    def test_degenerate_constants_give_zero(self):
        config = EstimatorConfig(loss_bound=0.0)
        assert second_form_bound(LINE_VAL, LINE_TEST, 2, config, 0.0) == 0.0

    def test_first_form_never_exceeds_second_form(self):
        rng = np.random.default_rng(23)
        for _ in range(40):
            val, test = random_euclidean_instance(rng, max_n=60, max_m=25)
            k = int(rng.integers(1, len(val) + 1))
            config = EstimatorConfig()
            first = first_form_bound(val, test, k, config, 1.0)
            second = second_form_bound(val, test, k, config, 1.0)
            assert first <= second + 1e-12


class TestGeneralDenseBound:
    def test_zero_fill_gives_zero(self):
        assert general_dense_bound(0.0, 2, 100) == 0.0

    def test_golden_value(self):
        got = general_dense_bound(0.01, 2, 10000, EstimatorConfig(), 1.0)
        assert got == pytest.approx(9.068274983013831, rel=1e-13)
        # recompute with mpmath
        gamma = mpf(1) / 4
        t = mpf("0.01") ** (mpf(2) / 4)
        conc = mp.sqrt(mpf(1) / 2 * mp.log(20))
        want = mp.sqrt(2) * (4 / gamma**2 * t + min(gamma ** (mpf(2) / 4) * t,
                                                    1 / mp.sqrt(10000)) * conc)
        assert got == pytest.approx(float(want), rel=1e-13)

    def test_degenerate_branch_at_large_fill(self):
        config = EstimatorConfig()
        want = 2.0 * math.sqrt(3) + hoeffding_constant(0.1, 1.0)
        assert general_dense_bound(1.5, 3, 100, config, 2.0) == pytest.approx(want)
        zero_cfg = EstimatorConfig(loss_bound=0.0)
        assert general_dense_bound(1.5, 3, 100, zero_cfg, 0.0) == 0.0

    def test_zero_constants_leave_scaled_fill_term(self):
        # With lipschitz 0 the C_L = max(1, L) factor keeps the bias term alive.
        config = EstimatorConfig(loss_bound=0.0)
        got = general_dense_bound(0.04, 2, 100, config, 0.0)
        assert got == pytest.approx(math.sqrt(2) * 64.0 * math.sqrt(0.04), rel=1e-12)


class TestSklearnStyleApi:
    def test_holdout_wrapper(self):
        est = HoldoutRisk().fit(np.array([[0.0], [1.0]]), [0.2, 0.4])
        assert est.predict() == pytest.approx(0.3)
        assert est.estimate().diagnostics["holdout_se"] is not None

    def test_knn_wrapper_matches_functional(self):
        est = KNNRisk(k=2).fit(LINE_VAL.points, LINE_LOSSES.values)
        assert est.predict(LINE_TEST.points) == pytest.approx(0.35)

    def test_snn_wrapper_matches_functional(self):
        est = SNNRisk(k_grid=(1, 2, 4, 8)).fit(
            LADDER_VAL.points, np.linspace(0.05, 0.5, 10)
        )
        result = est.estimate(SINGLE_TEST.points)
        assert result.chosen_k == 4

    def test_get_params_and_clone(self):
        est = SNNRisk(delta=0.2, loss_bound=0.5, k_grid=(1, 2))
        params = est.get_params()
        assert params["delta"] == 0.2
        dup = clone(est)
        assert dup.get_params() == params

    def test_haversine_metric_option(self):
        coords = np.array([[0.1, 0.2], [0.3, 0.4], [0.15, 0.25]])
        est = KNNRisk(k=1, metric="haversine").fit(coords, [0.1, 0.9, 0.3])
        value = est.predict(np.array([[0.11, 0.21]]))
        assert value == pytest.approx(0.1)
