"""A stochastic line search that estimates the step on the same sample it steps with can stall.

The sum ``f = (f_1 + f_2)/2`` with ``f_1 = (w-1)^2/2`` and ``f_2 = (2w + 1/2)^2/2``
has its minimiser at 0. Component 1 is flat (``L_1 = 1``) and pulls towards 1;
component 2 is steep (``L_2 = 4``) and pulls towards -1/4. The Armijo search on
the sampled component picks a large step exactly when that component pulls
away from 0, so the expected iterate obeys a recursion whose fixed point is 3/8
no matter how fast the schedule decays.

Drawing the line-search sample independently of the update sample and never
increasing the step removes the correlation, and the iterates converge.

Run with ``python demos/line_search_stall.py``.
"""

from adaptsgd.lowerbounds import NEIGHBOURHOOD_FLOOR, simulate_sls_neighbourhood, sls_expectation_path
from adaptsgd.schedules import ScheduleSpec

SEEDS = 2000


def main():
    print(f"expected iterate of the correlated search (floor {NEIGHBOURHOOD_FLOOR}):")
    for T in (10, 100, 1000, 10_000):
        path = sls_expectation_path(1.0, 0.5, ScheduleSpec.exponential(1.0, T), T)
        print(f"  T = {T:>6}: E w_T = {path[-1]:.6f}")

    print(f"\nmean |w_T| over {SEEDS} runs, exponential schedule, gamma_max = 1")
    print(f"{'T':>7} {'online':>16} {'decorrelated':>16}")
    for T in (100, 1000, 10_000):
        sched = ScheduleSpec.exponential(1.0, T)
        om, ose = simulate_sls_neighbourhood(SEEDS, T, sched, variant="online", statistic="abs")
        dm, dse = simulate_sls_neighbourhood(SEEDS, T, sched, variant="decorrelated", statistic="abs")
        print(f"{T:>7} {om:>9.4f} ± {ose:.0e} {dm:>9.4f} ± {dse:.0e}")


if __name__ == "__main__":
    main()
