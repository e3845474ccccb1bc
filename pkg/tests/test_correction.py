import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridsched import (CostModelParams, LinearCorrection, PerturbationSpec,
                       apply_correction, fit_correction_run,
                       fit_gamma_epsilon, linear_correction, mae, perturb,
                       u_cost, v_cost)

finite_floats = st.floats(min_value=-1e6, max_value=1e6,
                          allow_nan=False, allow_infinity=False)


def normalized(y, p):
    m, s = y.mean(), y.std()
    return (y - m) / s, (p - m) / s


class TestPerturb:
    def test_zero_factor_identity(self):
        actual = np.array([5.0, 10.0, 15.0])
        np.testing.assert_array_equal(perturb(actual, 0.0), actual)

    def test_hand_case(self):
        np.testing.assert_allclose(perturb([100.0, 200.0], 0.1),
                                   [110.0, 220.0])

    def test_negative_factor_underforecasts(self):
        np.testing.assert_allclose(perturb([100.0, 200.0], -0.2),
                                   [80.0, 160.0])

    def test_spec_object(self):
        spec = PerturbationSpec(0.25)
        np.testing.assert_allclose(perturb([40.0], spec), [50.0])

    def test_default_cap(self):
        with pytest.raises(ValueError):
            PerturbationSpec(0.6)

    def test_custom_cap(self):
        with pytest.raises(ValueError):
            PerturbationSpec(0.3, max_abs_factor=0.2)
        assert PerturbationSpec(0.3, max_abs_factor=0.4).factor == 0.3

    def test_non_finite_factor(self):
        with pytest.raises(ValueError):
            perturb([1.0], float("nan"))

    def test_non_finite_series(self):
        with pytest.raises(ValueError):
            perturb([1.0, float("inf")], 0.1)


class TestUCost:
    def test_hand_case(self):
        # mae([10, 20], [12, 16]) = 3, so the symmetric score is 1.5
        assert u_cost([10.0, 20.0], [12.0, 16.0]) == 1.5

    def test_zero_on_equal(self):
        assert u_cost([3.0, 4.0], [3.0, 4.0]) == 0.0

    @given(st.lists(st.tuples(finite_floats, finite_floats),
                    min_size=1, max_size=20))
    @settings(max_examples=50, deadline=None)
    def test_half_mae_identity(self, pairs):
        actual = np.array([a for a, _ in pairs])
        predicted = np.array([p for _, p in pairs])
        assert u_cost(actual, predicted) == pytest.approx(
            0.5 * mae(actual, predicted), rel=1e-12, abs=1e-12)


class TestVCost:
    def test_zero_weights_half_mse(self):
        rng = np.random.default_rng(3)
        actual = rng.normal(0, 1, 64)
        predicted = actual + rng.normal(0, 1, 64)
        value = v_cost(actual, predicted, CostModelParams(0.0, 0.0))
        assert value == pytest.approx(
            0.5 * np.mean((actual - predicted) ** 2), rel=1e-12)

    @pytest.mark.parametrize("r", [1.5, -0.8, 0.0])
    def test_constant_residual_closed_form(self, r):
        params = CostModelParams(0.7, 0.3)
        predicted = np.array([10.0, 20.0, 30.0])
        actual = predicted + r
        expected = 0.5 * r ** 2 + 0.7 * r + 0.3 * r ** 3 / 3.0
        assert v_cost(actual, predicted, params) == pytest.approx(
            expected, rel=1e-12, abs=1e-15)

    def test_antisymmetric_residuals_cancel_odd_terms(self):
        # residuals +r and -r in equal counts zero the linear and cubic sums
        predicted = np.array([10.0, 10.0, 20.0, 20.0])
        actual = predicted + np.array([2.0, -2.0, 2.0, -2.0])
        value = v_cost(actual, predicted, CostModelParams(1.3, 0.9))
        assert value == pytest.approx(0.5 * 4.0, rel=1e-12)

    def test_positive_gamma_penalizes_underforecast(self):
        rng = np.random.default_rng(4)
        actual = rng.uniform(50, 150, 96)
        params = CostModelParams(1.0, 0.5)
        under = v_cost(actual, perturb(actual, -0.1), params)
        over = v_cost(actual, perturb(actual, 0.1), params)
        assert under > over

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            v_cost([1.0], [1.0, 2.0], CostModelParams(0.0, 0.0))

    def test_non_finite_params(self):
        with pytest.raises(ValueError):
            CostModelParams(float("nan"), 0.0)


def planted_pairs(rng, gamma, epsilon, n=256, noise=2.0):
    """Perturbed forecasts whose observed costs follow the planted weights."""
    actual = rng.normal(100.0, 30.0, n)
    params = CostModelParams(gamma, epsilon)
    pairs = []
    for factor in (-0.4, -0.25, -0.1, -0.03, 0.03, 0.1, 0.25, 0.4):
        predicted = perturb(actual, factor) + rng.normal(0.0, noise, n)
        yn, pn = normalized(actual, predicted)
        pairs.append((actual, predicted, v_cost(yn, pn, params)))
    return pairs


class TestFitGammaEpsilon:
    @pytest.mark.parametrize("gamma,epsilon",
                             [(1.0, 0.5), (1.37, 0.58), (-0.5, 0.2)])
    def test_planted_recovery(self, gamma, epsilon):
        pairs = planted_pairs(np.random.default_rng(42), gamma, epsilon)
        params, corr = fit_gamma_epsilon(pairs)
        assert params.gamma == pytest.approx(gamma, abs=0.05)
        assert params.epsilon == pytest.approx(epsilon, abs=0.05)
        assert corr >= 0.999

    def test_grid_only_recovery(self):
        pairs = planted_pairs(np.random.default_rng(7), 1.37, 0.58)
        params, corr = fit_gamma_epsilon(pairs, refine=False)
        # the 0.05-step grid lands within half a step of off-grid weights
        assert params.gamma == pytest.approx(1.37, abs=0.05)
        assert params.epsilon == pytest.approx(0.58, abs=0.05)
        assert corr >= 0.99

    def test_too_few_pairs(self):
        pairs = planted_pairs(np.random.default_rng(1), 1.0, 0.0)
        with pytest.raises(ValueError):
            fit_gamma_epsilon(pairs[:2])

    def test_equal_costs(self):
        pairs = planted_pairs(np.random.default_rng(1), 1.0, 0.0)
        flat = [(a, p, 1.0) for a, p, _ in pairs]
        with pytest.raises(ValueError):
            fit_gamma_epsilon(flat)

    def test_non_finite_costs(self):
        pairs = planted_pairs(np.random.default_rng(1), 1.0, 0.0)
        bad = [(a, p, float("nan")) for a, p, _ in pairs[:3]]
        with pytest.raises(ValueError):
            fit_gamma_epsilon(bad)

    def test_constant_actual(self):
        actual = np.full(16, 5.0)
        pairs = [(actual, actual * (1 + f), float(i))
                 for i, f in enumerate((-0.1, 0.0, 0.1))]
        with pytest.raises(ValueError):
            fit_gamma_epsilon(pairs)


class TestLinearCorrection:
    def fixture_series(self):
        rng = np.random.default_rng(42)
        actual = rng.normal(100.0, 30.0, 256)
        predicted = actual * 1.1 + rng.normal(0.0, 5.0, 256)
        return actual, predicted

    def test_zero_weights_match_least_squares(self):
        actual, predicted = self.fixture_series()
        corr = linear_correction(actual, predicted, CostModelParams(0.0, 0.0))
        design = np.vstack([predicted, np.ones_like(predicted)]).T
        coef, *_ = np.linalg.lstsq(design, actual, rcond=None)
        assert corr.alpha == pytest.approx(coef[0], abs=1e-6)
        assert corr.beta == pytest.approx(coef[1], abs=1e-6)

    def test_gamma_shifts_bias_only(self):
        actual, predicted = self.fixture_series()
        base = linear_correction(actual, predicted, CostModelParams(0.0, 0.0))
        shifted = linear_correction(actual, predicted, CostModelParams(2.0, 0.0))
        assert shifted.alpha == pytest.approx(base.alpha, abs=1e-12)
        assert shifted.beta == pytest.approx(base.beta + 2.0, abs=1e-12)

    def test_cubic_weight_local_optimality(self):
        actual, predicted = self.fixture_series()
        yn, pn = normalized(actual, predicted)
        params = CostModelParams(0.5, 0.3)
        corr = linear_correction(yn, pn, params)
        value = v_cost(yn, corr.beta + corr.alpha * pn, params)
        for a in np.linspace(corr.alpha - 0.2, corr.alpha + 0.2, 41):
            for b in np.linspace(corr.beta - 0.2, corr.beta + 0.2, 41):
                assert value <= v_cost(yn, b + a * pn, params) + 1e-9

    def test_unbounded_cubic_raises(self):
        actual, predicted = self.fixture_series()
        yn, pn = normalized(actual, predicted)
        with pytest.raises(ValueError):
            linear_correction(yn, pn, CostModelParams(0.0, -5.0))

    def test_constant_predicted(self):
        with pytest.raises(ValueError):
            linear_correction([1.0, 2.0], [3.0, 3.0], CostModelParams(0.0, 0.0))

    def test_non_finite_fields(self):
        with pytest.raises(ValueError):
            LinearCorrection(float("inf"), 0.0)


class TestApplyCorrection:
    def test_identity(self):
        predicted = np.array([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(
            apply_correction(predicted, LinearCorrection(1.0, 0.0)), predicted)

    def test_affine_hand_case(self):
        out = apply_correction([10.0, 20.0], LinearCorrection(0.5, 3.0))
        np.testing.assert_allclose(out, [8.0, 13.0])

    def test_composes_with_least_squares_fit(self):
        rng = np.random.default_rng(9)
        actual = rng.normal(50.0, 10.0, 128)
        predicted = 0.8 * actual + rng.normal(0.0, 2.0, 128)
        corr = linear_correction(actual, predicted, CostModelParams(0.0, 0.0))
        design = np.vstack([predicted, np.ones_like(predicted)]).T
        coef, *_ = np.linalg.lstsq(design, actual, rcond=None)
        np.testing.assert_allclose(apply_correction(predicted, corr),
                                   design @ coef, atol=1e-8)


class TestFitCorrectionRun:
    def run_fixture(self):
        rng = np.random.default_rng(42)
        actual = rng.normal(100.0, 30.0, 256)
        planted = CostModelParams(0.8, 0.1)
        factors = np.linspace(-0.2, 0.2, 7)
        forecasts = [perturb(actual, f) for f in factors]
        yn = normalized(actual, actual)[0]
        m, s = actual.mean(), actual.std()
        costs = [v_cost(yn, (f - m) / s, planted) for f in forecasts]
        return actual, forecasts, costs, planted

    def test_planted_recovery(self):
        actual, forecasts, costs, planted = self.run_fixture()
        run = fit_correction_run(actual, forecasts, costs)
        assert run["gamma"] == pytest.approx(planted.gamma, abs=0.05)
        assert run["epsilon"] == pytest.approx(planted.epsilon, abs=0.05)
        assert run["correlation"] >= 0.999

    def test_raw_unit_mapping(self):
        # alpha carries over; beta folds the normalization offset back in
        actual, forecasts, costs, _ = self.run_fixture()
        run = fit_correction_run(actual, forecasts, costs)
        m, s = actual.mean(), actual.std()
        yn = (actual - m) / s
        pooled_y = np.concatenate([yn] * len(forecasts))
        pooled_p = np.concatenate([(f - m) / s for f in forecasts])
        norm = linear_correction(pooled_y, pooled_p,
                                 CostModelParams(run["gamma"], run["epsilon"]))
        assert run["alpha"] == pytest.approx(norm.alpha, abs=1e-12)
        assert run["beta"] == pytest.approx(
            m + s * norm.beta - norm.alpha * m, abs=1e-9)

    def test_correction_lowers_pooled_score(self):
        actual, forecasts, costs, planted = self.run_fixture()
        run = fit_correction_run(actual, forecasts, costs)
        m, s = actual.mean(), actual.std()
        yn = (actual - m) / s
        pooled_y = np.concatenate([yn] * len(forecasts))
        pooled_p = np.concatenate([(f - m) / s for f in forecasts])
        corrected = np.concatenate(
            [(run["beta"] + run["alpha"] * f - m) / s for f in forecasts])
        assert v_cost(pooled_y, corrected, planted) \
            <= v_cost(pooled_y, pooled_p, planted)

    def test_length_mismatch(self):
        actual, forecasts, costs, _ = self.run_fixture()
        with pytest.raises(ValueError):
            fit_correction_run(actual, forecasts, costs[:-1])
