"""Fast property checks that run without pytest, used by ``adaptsgd selftest``."""

from __future__ import annotations

import numpy as np

from .lowerbounds import Verdict
from .optimizers import GammaPolicy, run_asgd, run_asgd_reformulated, run_sgd
from .problems import make_linear_problem, mismatched_curvature_pair, random_quadratic_sum
from .schedules import ScheduleSpec, alpha_sequence, kr20_step, partial_sums

__all__ = ["run_selftest"]


def _gradient_check(rng):
    worst = 0.0
    for loss in ("squared", "logistic"):
        p = make_linear_problem(20, 5, loss, 0.1, seed=1)
        for _ in range(20):
            w = rng.standard_normal(5)
            i = int(rng.integers(p.n))
            _, g = p.component_value_grad(i, w)
            h = 1e-5 * (1 + np.linalg.norm(w))
            fd = np.array([(p.component_value(i, w + h * e) - p.component_value(i, w - h * e)) / (2 * h)
                           for e in np.eye(5)])
            worst = max(worst, np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-12))
    return Verdict("component_gradients_match_finite_differences", worst <= 1e-6, f"max relative error {worst:.2e}")


def _smoothness_check(rng):
    p = make_linear_problem(20, 5, "logistic", 0.1, seed=2)
    worst = np.inf
    for _ in range(100):
        i = int(rng.integers(p.n))
        v, w = rng.standard_normal(5) * 3, rng.standard_normal(5) * 3
        fw, g = p.component_value_grad(i, w)
        rhs = fw + g @ (v - w) + 0.5 * p.smoothness[i] * np.sum((v - w) ** 2)
        worst = min(worst, rhs - p.component_value(i, v))
    return Verdict("component_smoothness_certificates", worst >= -1e-12, f"min slack {worst:.2e}")


def _schedule_checks():
    ok = True
    for spec in (ScheduleSpec.constant(), ScheduleSpec.polynomial(0.5), ScheduleSpec.exponential(2.0, 500)):
        a = alpha_sequence(spec, 0, 500)
        ok &= bool(np.all(np.diff(a) <= 0) and np.all(a > 0) and np.all(a <= 1))
    kr = ScheduleSpec.kr20_schedule(1.0, 1.0, 1.0, 100)
    steps = [kr20_step(k, kr) for k in range(100)]
    ok &= bool(np.all(np.diff(steps) <= 0))
    s1, s2 = partial_sums(ScheduleSpec.constant(), 5)
    ok &= (s1, s2) == (5.0, 5.0)
    return Verdict("schedules_monotone_and_bounded", ok, "constant, poly, exp, kr20")


def _asgd_equivalence():
    p = random_quadratic_sum(20, 10, 100.0, seed=3, noise=0.5)
    a = run_asgd(p, p.mu, p.L, 1.0, 300, 5, checkpoint_every=1, keep_iterates=True, w0=np.ones(10))
    b = run_asgd_reformulated(p, p.mu, p.L, 1.0, 300, 5, checkpoint_every=1, keep_iterates=True, w0=np.ones(10))
    A, B = a.iterates, b.iterates
    err = float(np.max(np.linalg.norm(A - B, axis=1) / (1 + np.linalg.norm(A, axis=1))))
    return Verdict("momentum_and_three_sequence_forms_agree", err <= 1e-8, f"max relative gap {err:.2e}")


def _interpolation_rate():
    p = random_quadratic_sum(30, 4, 10.0, seed=4, noise=0.0)
    tr = run_sgd(p, ScheduleSpec.constant(), GammaPolicy.inverse_L(p.L), 2000, 0, w1=np.ones(4))
    ratio = tr.grad_norms[-1] / tr.grad_norms[0]
    return Verdict("interpolation_linear_rate", ratio <= 1e-6, f"gradient norm ratio {ratio:.2e}")


def _full_gradient_pair():
    p = mismatched_curvature_pair()
    g = float(p.full_gradient(np.array([1.0]))[0])
    return Verdict("mismatched_pair_gradient", g == 2.5, f"f'(1) = {g!r}")


def run_selftest(seed: int = 0) -> list[Verdict]:
    rng = np.random.default_rng(seed)
    return [
        _gradient_check(rng),
        _smoothness_check(rng),
        _schedule_checks(),
        _asgd_equivalence(),
        _interpolation_rate(),
        _full_gradient_pair(),
    ]
