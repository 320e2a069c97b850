import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptsgd.errors import NumericError, ParameterDomainError
from adaptsgd.linesearch import LineSearchConfig
from adaptsgd.optimizers import (
    DIVERGENCE_NORM,
    GammaPolicy,
    asgd_coeffs,
    run_asgd,
    run_asgd_reformulated,
    run_sgd,
    run_sgd_averaged,
    run_sgd_ensemble,
    sgd_step,
)
from adaptsgd.problems import (
    LinearModelProblem,
    make_linear_problem,
    make_reference,
    mismatched_curvature_pair,
    random_quadratic_sum,
)
from adaptsgd.schedules import ScheduleSpec, alpha_sequence, step_sequence


def plain_sgd(p, mult, gamma, T, seed, w1):
    """Independent loop: indices come from one block of ``integers(0, n, (4096, 1))``."""
    idx = np.random.default_rng(seed).integers(0, p.n, size=(4096, 1))[:, 0]
    w = np.array(w1, dtype=float)
    for k in range(1, T + 1):
        _, g = p.component_value_grad(idx[k - 1], w)
        w = w - gamma * mult[k - 1] * g
    return w


class TestSgdStep:
    def test_update(self):
        np.testing.assert_array_equal(sgd_step(np.ones(2), 0.5, 0.5, np.array([4.0, -4.0])), [0.0, 2.0])

    @pytest.mark.parametrize("gamma,alpha", [(0.0, 1.0), (1.0, 0.0), (1.0, 1.5)])
    def test_domain(self, gamma, alpha):
        with pytest.raises(ParameterDomainError):
            sgd_step(np.ones(1), gamma, alpha, np.ones(1))

    def test_non_finite(self):
        with pytest.raises(NumericError):
            sgd_step(np.array([np.nan]), 1.0, 1.0, np.ones(1), iteration=3)


class TestGammaPolicy:
    def test_fixed_values(self):
        assert GammaPolicy.inverse_L(4.0).fixed_gamma == 0.25
        assert GammaPolicy.scaled(0.5, 4.0).fixed_gamma == 0.125
        assert GammaPolicy.accelerated(2.0, 4.0).fixed_gamma == 0.125
        assert GammaPolicy.online_sls().fixed_gamma is None

    def test_validation(self):
        with pytest.raises(ParameterDomainError):
            GammaPolicy.inverse_L(0.0)
        with pytest.raises(ParameterDomainError):
            GammaPolicy.accelerated(0.5, 1.0)
        with pytest.raises(ParameterDomainError):
            GammaPolicy.decorrelated_sls(probe_index="other")

    def test_line_search_default_config(self):
        assert GammaPolicy.online_sls().ls == LineSearchConfig()


class TestSgdAgainstReferenceLoop:
    @pytest.mark.parametrize("schedule", [ScheduleSpec.constant(), ScheduleSpec.polynomial(0.5),
                                          ScheduleSpec.exponential(2.0, 60)])
    def test_matches_plain_loop(self, schedule):
        p = make_linear_problem(15, 3, "logistic", 0.01, seed=0)
        w1 = np.array([1.0, -1.0, 0.5])
        tr = run_sgd(p, schedule, GammaPolicy.inverse_L(p.L), 60, 11, w1=w1)
        expected = plain_sgd(p, alpha_sequence(schedule, 1, 60), 1.0 / p.L, 60, 11, w1)
        np.testing.assert_allclose(tr.final_iterate, expected, rtol=1e-13, atol=1e-15)

    def test_kr20_uses_full_steps(self):
        p = random_quadratic_sum(20, 3, 10.0, seed=0, noise=0.2)
        spec = ScheduleSpec.kr20_schedule(p.L, p.mu, 2.0, 80)
        tr = run_sgd(p, spec, None, 80, 4, w1=np.ones(3), checkpoint_every=40)
        expected = plain_sgd(p, step_sequence(spec, 0, 79), 1.0, 80, 4, np.ones(3))
        np.testing.assert_allclose(tr.final_iterate, expected, rtol=1e-13)
        assert all(c.gamma == 1.0 for c in tr.checkpoints)

    def test_policy_required(self):
        p = mismatched_curvature_pair()
        with pytest.raises(ParameterDomainError):
            run_sgd(p, ScheduleSpec.constant(), None, 5, 0)

    def test_full_batch_is_gradient_descent(self):
        p = make_linear_problem(12, 3, "squared", 0.0, seed=1)
        tr = run_sgd(p, ScheduleSpec.constant(), GammaPolicy.inverse_L(p.L), 25, 0, batch_size=p.n)
        w = np.zeros(3)
        for _ in range(25):
            w = w - p.full_gradient(w) / p.L
        np.testing.assert_allclose(tr.final_iterate, w, rtol=1e-12)

    def test_deterministic_and_seed_dependent(self):
        p = make_linear_problem(30, 4, "squared", 0.0, seed=1)
        pol = GammaPolicy.inverse_L(p.L)
        a = run_sgd(p, ScheduleSpec.constant(), pol, 100, 3)
        b = run_sgd(p, ScheduleSpec.constant(), pol, 100, 3)
        c = run_sgd(p, ScheduleSpec.constant(), pol, 100, 4)
        np.testing.assert_array_equal(a.final_iterate, b.final_iterate)
        assert not np.array_equal(a.final_iterate, c.final_iterate)

    def test_longer_horizon_extends_shorter(self):
        p = make_linear_problem(30, 4, "squared", 0.0, seed=1)
        pol = GammaPolicy.inverse_L(p.L)
        short = run_sgd(p, ScheduleSpec.constant(), pol, 50, 3)
        long = run_sgd(p, ScheduleSpec.constant(), pol, 100, 3, checkpoint_every=50, keep_iterates=True)
        np.testing.assert_array_equal(long.iterates[1], short.final_iterate)


class TestCheckpoints:
    def test_schedule_of_checkpoints(self):
        p = mismatched_curvature_pair()
        tr = run_sgd(p, ScheduleSpec.constant(), GammaPolicy.inverse_L(p.L), 10, 0, checkpoint_every=3)
        np.testing.assert_array_equal(tr.iterations, [0, 3, 6, 9, 10])
        np.testing.assert_array_equal([c.grad_evals for c in tr.checkpoints], [0, 3, 6, 9, 10])

    def test_reference_statistics(self):
        p = make_linear_problem(20, 3, "squared", 0.1, seed=2)
        p.reference = make_reference(p)
        tr = run_sgd(p, ScheduleSpec.constant(), GammaPolicy.inverse_L(p.L), 20, 0, checkpoint_every=10,
                     keep_iterates=True)
        for c in tr.checkpoints:
            assert c.dist_sq == pytest.approx(np.sum((c.iterate - p.reference.w_star) ** 2), rel=1e-12)
            assert c.f_gap == pytest.approx(p.value(c.iterate) - p.reference.f_star, rel=1e-9, abs=1e-14)
            assert c.grad_norm == pytest.approx(np.linalg.norm(p.full_gradient(c.iterate)), rel=1e-12)

    def test_no_reference_gives_none(self):
        p = mismatched_curvature_pair()
        tr = run_sgd(p, ScheduleSpec.constant(), GammaPolicy.inverse_L(p.L), 4, 0)
        assert tr.checkpoints[-1].dist_sq is None and tr.checkpoints[-1].f_gap is None


class TestLineSearchRuns:
    def test_online_costs_one_gradient_per_step(self):
        p = make_linear_problem(20, 3, "logistic", 0.01, seed=0)
        tr = run_sgd(p, ScheduleSpec.constant(), GammaPolicy.online_sls(), 40, 0)
        last = tr.checkpoints[-1]
        assert last.grad_evals == 40
        assert last.function_evals >= 40

    def test_decorrelated_costs_two_gradients_and_never_increases(self):
        p = make_linear_problem(20, 3, "logistic", 0.01, seed=0)
        tr = run_sgd(p, ScheduleSpec.constant(), GammaPolicy.decorrelated_sls(LineSearchConfig(gamma_max=50.0)),
                     200, 0, checkpoint_every=1)
        assert tr.checkpoints[-1].grad_evals == 400
        gam = np.array([c.gamma for c in tr.checkpoints])
        assert np.all(np.diff(gam) <= 0)
        assert gam[-1] < 50.0

    def test_probe_index_is_previous_update_index(self):
        p = make_linear_problem(10, 2, "squared", 0.0, seed=0)
        ens = run_sgd_ensemble(p, ScheduleSpec.constant(), GammaPolicy.decorrelated_sls(), 500, 7, lanes=3,
                               record_indices=True)
        i, j = ens.extra["indices"], ens.extra["probe_indices"]
        assert i.shape == j.shape == (500, 3)
        np.testing.assert_array_equal(j[1:], i[:-1])
        # update indices come first in each block, then the probe stream
        rng = np.random.default_rng(7)
        upd = rng.integers(0, p.n, size=(4096, 3))
        prb = rng.integers(0, p.n, size=(4096, 3))
        np.testing.assert_array_equal(i, upd[:500])
        np.testing.assert_array_equal(j[0], prb[0])

    def test_fresh_probe_indices_are_independent(self):
        p = make_linear_problem(10, 2, "squared", 0.0, seed=0)
        ens = run_sgd_ensemble(p, ScheduleSpec.constant(),
                               GammaPolicy.decorrelated_sls(probe_index="fresh"), 4000, 1, lanes=5,
                               record_indices=True)
        i, j = ens.extra["indices"], ens.extra["probe_indices"]
        match = float(np.mean(i == j))
        se = math.sqrt(0.1 * 0.9 / i.size)
        assert abs(match - 0.1) < 5 * se

    def test_online_interpolation_rate(self):
        p = random_quadratic_sum(30, 4, 10.0, seed=1, noise=0.0)
        tr = run_sgd(p, ScheduleSpec.constant(), GammaPolicy.online_sls(LineSearchConfig(gamma_max=10.0 / p.L)),
                     1500, 0, w1=np.ones(4))
        assert tr.grad_norms[-1] <= 1e-8 * tr.grad_norms[0]


class TestDivergence:
    def test_single_run_stops(self):
        p = mismatched_curvature_pair()
        tr = run_sgd(p, ScheduleSpec.constant(), GammaPolicy.scaled(3.0, 1.0), 10_000, 0, w1=np.ones(1),
                     checkpoint_every=5000)
        assert tr.status == "diverged"
        assert np.all(np.isnan(tr.final_iterate))
        assert tr.iterations[-1] < 10_000

    def test_ensemble_freezes_only_bad_lanes(self):
        # component 2 alone drives |w| up by a factor 5; component 1 contracts to its own minimum
        p = LinearModelProblem(np.array([[0.1], [2.0]]), np.array([0.0, 0.0]))
        ens = run_sgd_ensemble(p, ScheduleSpec.constant(), GammaPolicy.scaled(6.0, 4.0), 200, 0, lanes=400,
                               w1=np.ones(1))
        assert ens.diverged.any()
        assert np.all(np.isnan(ens.final[ens.diverged]))
        assert np.all(np.isfinite(ens.final[~ens.diverged]))
        assert np.all(np.abs(ens.final[~ens.diverged]) <= DIVERGENCE_NORM)


class TestAveraging:
    def test_weighted_average_matches_manual(self):
        p = random_quadratic_sum(10, 2, 5.0, seed=0, noise=0.3)
        spec = ScheduleSpec.exponential(1.0, 30)
        tr, avg = run_sgd_averaged(p, spec, p.L, 30, 2, checkpoint_every=1, w1=np.ones(2))
        a = alpha_sequence(spec, 1, 30)
        idx = np.random.default_rng(2).integers(0, p.n, size=(4096, 1))[:, 0]
        w = np.ones(2)
        acc = np.zeros(2)
        for k in range(30):
            acc += a[k] * w
            w = w - a[k] / (2 * p.L) * p.component_value_grad(idx[k], w)[1]
        np.testing.assert_allclose(avg, acc / a.sum(), rtol=1e-13)
        np.testing.assert_allclose(tr.final_iterate, w, rtol=1e-13)

    def test_ensemble_average(self):
        p = random_quadratic_sum(10, 2, 5.0, seed=0, noise=0.3)
        ens = run_sgd_averaged(p, ScheduleSpec.constant(), p.L, 20, 0, lanes=4)
        assert ens.averaged.shape == (4, 2)

    def test_needs_a_step(self):
        p = mismatched_curvature_pair()
        with pytest.raises(ParameterDomainError):
            run_sgd_averaged(p, ScheduleSpec.constant(), 4.0, 0, 0)


class TestMiniBatch:
    def test_indices_without_replacement(self):
        p = make_linear_problem(12, 2, "squared", 0.0, seed=0)
        ens = run_sgd_ensemble(p, ScheduleSpec.constant(), GammaPolicy.inverse_L(p.L), 50, 0, lanes=2,
                               batch_size=5, record_indices=True)
        idx = ens.extra["indices"]
        assert idx.shape == (50, 2, 5)
        assert np.all(np.diff(idx, axis=-1) > 0)

    def test_batch_size_domain(self):
        p = mismatched_curvature_pair()
        with pytest.raises(ParameterDomainError):
            run_sgd(p, ScheduleSpec.constant(), GammaPolicy.inverse_L(4.0), 5, 0, batch_size=3)


class TestAsgd:
    def test_constant_step_coefficient_is_classical(self):
        r = 0.1
        assert asgd_coeffs(r, r, 1.0) == pytest.approx((1 - r) / (1 + r), rel=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.floats(1.0, 5.0), st.sampled_from([1, 3]))
    def test_two_forms_agree(self, seed, beta, lanes):
        p = random_quadratic_sum(15, 4, 50.0, seed=seed % 13, noise=0.3)
        kw = dict(beta=beta, lanes=lanes, checkpoint_every=10, keep_iterates=True, w0=np.ones(4))
        a = run_asgd(p, p.mu, p.L, 1.5, 60, seed, **kw)
        b = run_asgd_reformulated(p, p.mu, p.L, 1.5, 60, seed, **kw)
        A = a.iterates if lanes == 1 else np.array(a.iterates)
        B = b.iterates if lanes == 1 else np.array(b.iterates)
        np.testing.assert_allclose(B, A, rtol=1e-9, atol=1e-11)

    def test_matches_nesterov_on_single_component(self):
        # with one component the method is deterministic Nesterov acceleration
        p = LinearModelProblem(np.array([[2.0, 0.0]]), np.array([1.0]), lam=0.1)
        mu, L = p.mu, p.L
        T = 40
        tr = run_asgd(p, mu, L, 1.0, T, 0, schedule=ScheduleSpec.constant(), w0=np.ones(2))
        eta = 1 / L
        b = (1 - math.sqrt(mu * eta)) / (1 + math.sqrt(mu * eta))
        w, w_prev = np.ones(2), np.ones(2)
        for _ in range(T):
            y = w + b * (w - w_prev)
            w_prev, w = w, y - eta * p.full_gradient(y)
        np.testing.assert_allclose(tr.final_iterate, w, rtol=1e-12, atol=1e-15)

    def test_reformulated_q_stays_at_mu_for_constant_steps(self):
        p = random_quadratic_sum(10, 2, 5.0, seed=0)
        tr = run_asgd_reformulated(p, p.mu, p.L, 1.0, 20, 0, schedule=ScheduleSpec.constant(),
                                   record_every_step=True)
        np.testing.assert_allclose(tr.extra["q"], p.mu, rtol=1e-12)
        np.testing.assert_allclose(tr.extra["r"], math.sqrt(p.mu / p.L), rtol=1e-12)

    def test_records_sequences(self):
        p = random_quadratic_sum(10, 2, 5.0, seed=0)
        tr = run_asgd(p, p.mu, p.L, 1.0, 20, 0, record_every_step=True)
        eta = tr.extra["eta"]
        np.testing.assert_allclose(eta, alpha_sequence(ScheduleSpec.exponential(1.0, 20), 0, 19) / p.L)
        np.testing.assert_allclose(tr.extra["r"], np.sqrt(p.mu * eta))
        assert tr.extra["b"].shape == (20,)

    def test_rejects_momentum_above_one(self):
        p = random_quadratic_sum(10, 2, 5.0, seed=0)
        with pytest.raises(ParameterDomainError):
            run_asgd(p, 2 * p.L, p.L, 1.0, 5, 0)
        with pytest.raises(ParameterDomainError):
            run_asgd(p, p.mu, p.L, 1.0, 5, 0, schedule=ScheduleSpec.kr20_schedule(p.L, p.mu, 1.0, 5))

    def test_converges_on_interpolating_problem(self):
        p = random_quadratic_sum(30, 4, 10.0, seed=1, noise=0.0)
        tr = run_asgd(p, p.mu, p.L, 2.0, 3000, 0, schedule=ScheduleSpec.constant(), w0=np.ones(4))
        assert tr.grad_norms[-1] < 1e-3 * tr.grad_norms[0]
