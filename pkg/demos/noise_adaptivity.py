"""Why the exponential schedule adapts to the noise level.

Two one-dimensional least-squares sums with the same curvature are solved by
SGD with step ``alpha_k / L`` and ``alpha_k = (1/T)**(k/T)``:

* the noisy sum has components with different minimisers, so the gradient
  noise at the solution is positive and the error can only fall like 1/T;
* the interpolating sum has a shared minimiser, and the same schedule, with
  no retuning, converges linearly.

Run with ``python demos/noise_adaptivity.py``.
"""

import numpy as np

from adaptsgd import GammaPolicy, LinearModelProblem, ScheduleSpec
from adaptsgd.optimizers import run_sgd_ensemble
from adaptsgd.problems import measure_noise
from adaptsgd.schedules import partial_sums

LANES = 200


def mean_sq_error(p, w_star, T, seed):
    ens = run_sgd_ensemble(p, ScheduleSpec.exponential(1.0, T), GammaPolicy.inverse_L(p.L), T, seed, lanes=LANES)
    return float(np.mean((ens.final[:, 0] - w_star) ** 2))


def main():
    rng = np.random.default_rng(0)
    x = rng.uniform(1.0, 2.0, 50)
    noisy = LinearModelProblem(x[:, None], rng.standard_normal(50))
    shared = LinearModelProblem(x[:, None], 0.7 * x)  # every component vanishes at w = 0.7
    w_noisy = float(x @ noisy.targets / (x @ x))

    for name, p, w_star in (("noisy", noisy, w_noisy), ("interpolating", shared, 0.7)):
        sigma_sq, _ = measure_noise(p, np.array([w_star]))
        print(f"{name} sum: L = {p.L:.3f}, mu = {p.mu:.3f}, noise at the solution = {sigma_sq:.3g}")

    print("\nmean squared distance to the solution over", LANES, "runs")
    print(f"{'T':>7} {'sum alpha':>10} {'noisy':>12} {'interpolating':>14}")
    Ts = [2**8, 2**10, 2**12, 2**14]
    noisy_err = []
    for T in Ts:
        s1, _ = partial_sums(ScheduleSpec.exponential(1.0, T), T)
        e1 = mean_sq_error(noisy, w_noisy, T, seed=T)
        e2 = mean_sq_error(shared, 0.7, T, seed=T)
        noisy_err.append(e1)
        print(f"{T:>7} {s1:>10.1f} {e1:>12.3e} {e2:>14.3e}")

    slope = np.polyfit(np.log(Ts), np.log(noisy_err), 1)[0]
    print(f"\nnoisy sum: error ~ T^{slope:.2f} (1/T up to log factors)")
    print("interpolating sum: error hits round-off long before the largest T")


if __name__ == "__main__":
    main()
