import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptsgd.errors import ParameterDomainError, WrongOperationError
from adaptsgd.schedules import (
    KR20Constants,
    ScheduleKind,
    ScheduleSpec,
    alpha_at,
    alpha_sequence,
    decayed_weight_sum,
    decayed_weight_sum_bound,
    exp_base,
    exp_power_margin,
    exp_sum_lower_bound,
    kr20_step,
    partial_sums,
    reciprocal_log_margin,
    step_sequence,
    sum_growth_diagnostic,
)

# 50-digit mpmath evaluations, frozen here as independent oracles.
ALPHA_T100 = 0.95499258602143594  # 0.01 ** 0.01
ALPHA_T10 = 0.79432823472428150  # 0.1 ** 0.1
EXP_SUM_T10 = 3.4759044844754562613  # sum_{k=1}^{10} alpha^k
EXP_SUM_SQ_T10 = 1.6926167251738358458  # sum_{k=1}^{10} alpha^{2k}


class TestExpBase:
    def test_beta_equals_horizon_gives_one(self):
        for T in (1, 7, 1000):
            assert exp_base(T, T) == 1.0

    def test_known_values(self):
        np.testing.assert_allclose(exp_base(1, 100), ALPHA_T100, rtol=1e-15)
        np.testing.assert_allclose(exp_base(1, 10), ALPHA_T10, rtol=1e-15)

    @pytest.mark.parametrize("beta,T", [(0.5, 10), (11, 10), (1, 0)])
    def test_domain_errors(self, beta, T):
        with pytest.raises(ParameterDomainError):
            exp_base(beta, T)

    @given(st.integers(1, 10**7), st.floats(0, 1))
    def test_result_in_unit_interval(self, T, frac):
        beta = 1 + frac * (T - 1)
        a = exp_base(beta, T)
        assert 0 < a <= 1

    def test_large_horizon_is_stable(self):
        a = exp_base(1, 10**9)
        np.testing.assert_allclose(a ** 10**9, 1e-9, rtol=1e-6)


class TestAlphaAt:
    def test_exponential_endpoints(self):
        spec = ScheduleSpec.exponential(1, 10)
        assert alpha_at(spec, 0) == 1.0
        assert alpha_at(spec, 10) == 0.1

    def test_polynomial_and_constant(self):
        assert alpha_at(ScheduleSpec.polynomial(1.0), 1) == 0.5
        assert alpha_at(ScheduleSpec.polynomial(0.5), 3) == 0.5
        assert alpha_at(ScheduleSpec.constant(), 123) == 1.0

    def test_kr20_rejected(self):
        spec = ScheduleSpec.kr20_schedule(1, 1, 1, 10)
        with pytest.raises(WrongOperationError):
            alpha_at(spec, 0)
        with pytest.raises(WrongOperationError):
            alpha_sequence(spec, 0, 3)

    def test_index_beyond_horizon(self):
        with pytest.raises(ParameterDomainError):
            alpha_at(ScheduleSpec.exponential(1, 10), 11)
        with pytest.raises(ParameterDomainError):
            alpha_at(ScheduleSpec.constant(), -1)

    def test_sequence_matches_pointwise(self):
        spec = ScheduleSpec.exponential(3, 50)
        seq = alpha_sequence(spec, 0, 50)
        np.testing.assert_allclose(seq, [alpha_at(spec, k) for k in range(51)], rtol=1e-15)

    @settings(max_examples=50)
    @given(st.sampled_from(["constant", "poly", "exp"]), st.floats(0, 1), st.integers(2, 5000))
    def test_non_increasing(self, kind, delta, T):
        spec = {"constant": ScheduleSpec.constant(), "poly": ScheduleSpec.polynomial(delta),
                "exp": ScheduleSpec.exponential(1, T)}[kind]
        a = alpha_sequence(spec, 0, T)
        assert np.all(np.diff(a) <= 0)
        assert np.all((a > 0) & (a <= 1))


class TestKR20:
    def test_constant_branch_when_horizon_short(self):
        spec = ScheduleSpec.kr20_schedule(2, 0.1, 10, 100)
        assert kr20_step(10, spec) == 1 / 80

    def test_first_half_is_constant(self):
        spec = ScheduleSpec.kr20_schedule(1, 1, 1, 100)
        assert kr20_step(10, spec) == 0.5

    def test_decay_branch(self):
        spec = ScheduleSpec.kr20_schedule(1, 1, 1, 100)
        np.testing.assert_allclose(kr20_step(60, spec), 1 / 7, rtol=1e-15)

    def test_b_constant(self):
        assert KR20Constants(2, 0.1, 10).b == 80
        assert KR20Constants(1, 1, 3).b == 6

    def test_wrong_spec(self):
        with pytest.raises(WrongOperationError):
            kr20_step(0, ScheduleSpec.constant())

    def test_missing_constants(self):
        with pytest.raises(ParameterDomainError):
            ScheduleSpec(ScheduleKind.KR20, horizon=10)
        with pytest.raises(ParameterDomainError):
            KR20Constants(1, 0, 1)

    @settings(max_examples=40)
    @given(st.floats(0.1, 10), st.floats(0.01, 1), st.floats(1, 100), st.integers(1, 3000))
    def test_non_increasing(self, L, mu_frac, rho, T):
        spec = ScheduleSpec.kr20_schedule(L, L * mu_frac, rho, T)
        steps = step_sequence(spec, 0, T - 1)
        assert np.all(np.diff(steps) <= 0)


class TestPartialSums:
    def test_constant(self):
        assert partial_sums(ScheduleSpec.constant(), 5) == (5.0, 5.0)

    def test_exponential_against_high_precision(self):
        s1, s2 = partial_sums(ScheduleSpec.exponential(1, 10), 10)
        np.testing.assert_allclose(s1, EXP_SUM_T10, rtol=1e-15)
        np.testing.assert_allclose(s2, EXP_SUM_SQ_T10, rtol=1e-15)

    def test_polynomial(self):
        s1, s2 = partial_sums(ScheduleSpec.polynomial(1.0), 3)
        np.testing.assert_allclose(s1, 1 / 2 + 1 / 3 + 1 / 4, rtol=1e-15)
        np.testing.assert_allclose(s2, 1 / 4 + 1 / 9 + 1 / 16, rtol=1e-15)

    def test_geometric_closed_form(self):
        for T, beta in [(100, 1), (1000, 5), (10**5, 2)]:
            a = exp_base(beta, T)
            s1, s2 = partial_sums(ScheduleSpec.exponential(beta, T), T)
            np.testing.assert_allclose(s1, a * (1 - a**T) / (1 - a), rtol=1e-12)
            np.testing.assert_allclose(s2, a**2 * (1 - a ** (2 * T)) / (1 - a**2), rtol=1e-12)

    def test_growth_diagnostic_reports_both_ratios(self):
        # exponential: sum/T shrinks like 1/ln T while sum_sq/sqrt(T) grows; neither regime holds both.
        rows = [sum_growth_diagnostic(ScheduleSpec.exponential(1, T), T) for T in (10**2, 10**4, 10**6)]
        assert rows[0]["sum_over_T"] > rows[1]["sum_over_T"] > rows[2]["sum_over_T"]
        assert rows[0]["sum_sq_over_sqrt_T"] < rows[1]["sum_sq_over_sqrt_T"] < rows[2]["sum_sq_over_sqrt_T"]
        assert set(rows[0]) == {"T", "sum_alpha", "sum_alpha_sq", "sum_over_T", "sum_sq_over_sqrt_T"}


GRID = [(T, beta) for T in (100, 1000, 10000) for beta in (1, 2, 10) if T > beta]


class TestExponentialSumBounds:
    @pytest.mark.parametrize("T,beta", GRID)
    def test_lower_bound_on_sum(self, T, beta):
        s1, _ = partial_sums(ScheduleSpec.exponential(beta, T), T)
        assert s1 >= exp_sum_lower_bound(T, beta)

    @pytest.mark.parametrize("T,beta", GRID)
    @pytest.mark.parametrize("kappa", [10, 100, 1000])
    @pytest.mark.parametrize("power", [1, 2])
    def test_decayed_weight_bounds(self, T, beta, kappa, power):
        assert decayed_weight_sum(T, beta, kappa, power) <= decayed_weight_sum_bound(T, beta, kappa, power)

    def test_decayed_weight_sum_direct(self):
        T, beta, kappa = 20, 1.0, 3.0
        a = alpha_sequence(ScheduleSpec.exponential(beta, T), 1, T)
        direct = sum(a[k] ** 2 * math.exp(-a[k + 1:].sum() / kappa) for k in range(T))
        np.testing.assert_allclose(decayed_weight_sum(T, beta, kappa, 2), direct, rtol=1e-13)

    def test_bound_domain(self):
        with pytest.raises(ParameterDomainError):
            exp_sum_lower_bound(10, 10)
        with pytest.raises(ParameterDomainError):
            decayed_weight_sum_bound(100, 1, 10, 3)

    @settings(max_examples=60)
    @given(st.integers(3, 20000), st.floats(0, 1), st.floats(0.5, 5000))
    def test_bounds_hold_for_random_parameters(self, T, frac, kappa):
        beta = 1 + frac * (T - 2) / 2
        s1, _ = partial_sums(ScheduleSpec.exponential(beta, T), T)
        assert s1 >= exp_sum_lower_bound(T, beta) - 1e-12 * s1
        for power in (1, 2):
            lhs = decayed_weight_sum(T, beta, kappa, power)
            assert lhs <= decayed_weight_sum_bound(T, beta, kappa, power) * (1 + 1e-12)


class TestHelperInequalities:
    def test_reciprocal_log_sweep(self):
        x = 1.0 + np.logspace(-12, 6, 10_000)
        assert np.all(reciprocal_log_margin(x) >= 0)

    def test_exp_power_sweep(self):
        x = np.logspace(-6, 3, 10_000)
        for gamma in np.logspace(-6, 3, 25):
            margin = exp_power_margin(x, gamma)
            assert np.all(margin >= -1e-12 * np.maximum(x, gamma))

    def test_exp_power_equality_at_x_equals_gamma(self):
        g = np.array([0.5, 2.0, 7.0])
        np.testing.assert_allclose(exp_power_margin(g, g), 0, atol=1e-14)

    def test_domains(self):
        with pytest.raises(ParameterDomainError):
            reciprocal_log_margin(1.0)
        with pytest.raises(ParameterDomainError):
            exp_power_margin(0.0, 1.0)


class TestScheduleSpec:
    def test_polynomial_delta_range(self):
        with pytest.raises(ParameterDomainError):
            ScheduleSpec.polynomial(1.5)

    def test_exponential_needs_horizon(self):
        with pytest.raises(ParameterDomainError):
            ScheduleSpec(ScheduleKind.EXPONENTIAL, beta=1.0)

    def test_describe(self):
        assert ScheduleSpec.exponential(2, 10).describe() == "exp(beta=2, T=10)"
        assert ScheduleSpec.polynomial(0.5).describe() == "poly(delta=0.5)"

    def test_kind_from_string(self):
        assert ScheduleSpec("exp", beta=1, horizon=5).kind is ScheduleKind.EXPONENTIAL
