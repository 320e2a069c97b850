"""Closed-form trajectories and verdicts for constructions where SGD provably stalls.

Each construction is a hard-coded one-dimensional quadratic (or a pair of
them), so every quantity has an exact formula to compare numeric runs with.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientSamplesError, ParameterDomainError
from .linesearch import LineSearchConfig, LineSearchMode
from .optimizers import GammaPolicy, run_sgd_ensemble
from .problems import mismatched_curvature_pair, shared_minimizer_pair
from .schedules import (
    ScheduleSpec,
    alpha_sequence,
    decayed_weight_sum,
    decayed_weight_sum_bound,
    exp_base,
    exp_power_margin,
    exp_sum_lower_bound,
    partial_sums,
    reciprocal_log_margin,
)

__all__ = [
    "Construction",
    "AnalyticTrajectory",
    "poly_gd_trajectory",
    "escape_successors",
    "constant_step_escape_check",
    "sls_expectation_path",
    "sls_correlated_expectation",
    "MisestimationReport",
    "misestimated_gd_trajectory",
    "misestimated_gd_check",
    "sum_prod_identity_check",
    "simulate_sls_neighbourhood",
    "Verdict",
    "verdict_suite",
    "NEIGHBOURHOOD_FLOOR",
    "ESCAPE_RADIUS",
]

NEIGHBOURHOOD_FLOOR = 3.0 / 8.0  # fixed point of the correlated line-search expectation
ESCAPE_RADIUS = 1.0 / 8.0  # constant-step SGD cannot stay this close to the minimiser


class Construction(str, enum.Enum):
    POLY_GD = "poly_gd"
    CONSTANT_SGD_ESCAPE = "constant_sgd_escape"
    SLS_CORRELATED_EXPECTATION = "sls_correlated_expectation"
    MISESTIMATED_GD = "misestimated_gd"


@dataclass(frozen=True)
class AnalyticTrajectory:
    """Iterates ``w_1, ..., w_{T+1}`` of a construction, stored as ``values[k-1] = w_k``."""

    construction: Construction
    params: dict
    values: np.ndarray
    w_star: float = 0.0
    extra: dict = field(default_factory=dict)

    def at(self, k: int) -> float:
        """Iterate ``w_k`` for ``k = 1..T+1``."""
        if not 1 <= k <= len(self.values):
            raise IndexError(f"k must lie in [1, {len(self.values)}]")
        return float(self.values[k - 1])

    @property
    def gaps(self) -> np.ndarray:
        return self.values - self.w_star


# --- gradient descent with polynomial steps --------------------------------


def poly_gd_trajectory(x, y, delta, T, w1) -> AnalyticTrajectory:
    """GD on ``0.5 (x w - y)**2`` with ``eta_k = (k+1)**-delta / x**2``.

    The gap obeys ``w_{k+1} - w* = (w_1 - w*) prod_{i<=k} (1 - (i+1)**-delta)``,
    which is ``(w_1 - w*)/(k+1)`` for ``delta = 1``. For ``delta < 1`` the
    extra dict carries the natural logs of ``|w_{T+1} - w*|`` and of the lower
    bound
    ``(w_1-w*) (1-2**-delta)**(floor(2**(1/delta))-1) 4**((2delta-1)/(1-delta)) 4**(-(T+1)**(1-delta)/(1-delta))``
    valid once ``T >= floor(2**(1/delta))``.
    """
    if x == 0:
        raise ParameterDomainError("x must be non-zero")
    if not 0 < delta <= 1:
        raise ParameterDomainError(f"delta must lie in (0, 1], got {delta}")
    w_star = y / x
    e1 = w1 - w_star
    k = np.arange(1, T + 1, dtype=float)
    if delta == 1:
        values = w_star + e1 / np.arange(1, T + 2, dtype=float)
        log_gap = math.log(abs(e1)) - math.log(T + 1) if e1 else -math.inf
        extra = {"log_gap": log_gap}
    else:
        factors = 1.0 - (k + 1.0) ** (-delta)
        values = w_star + e1 * np.concatenate([[1.0], np.cumprod(factors)])
        log_gap = math.log(abs(e1)) + math.fsum(np.log(factors)) if e1 else -math.inf
        k0 = math.floor(2.0 ** (1.0 / delta))
        log_bound = (
            (math.log(e1) if e1 > 0 else -math.inf)
            + (k0 - 1) * math.log(1.0 - 2.0 ** (-delta))
            + (2 * delta - 1) / (1 - delta) * math.log(4.0)
            - (T + 1) ** (1 - delta) / (1 - delta) * math.log(4.0)
        )
        extra = {"log_gap": log_gap, "log_lower_bound": log_bound, "threshold": k0, "bound_applies": T >= k0}
    params = {"x": x, "y": y, "delta": delta, "T": T, "w1": w1}
    return AnalyticTrajectory(Construction.POLY_GD, params, values, w_star, extra)


# --- constant-step SGD on the mismatched pair ------------------------------


def escape_successors(w):
    """Both possible next iterates of SGD with ``eta = 1/4`` on the mismatched pair.

    ``w`` may be a scalar or an array; the result is a pair of the same shape.
    """
    p = mismatched_curvature_pair()
    w = np.asarray(w, dtype=float)
    W = w.reshape(-1, 1)
    out = []
    for i in (0, 1):
        g = p.batch_grad(np.full(W.shape[0], i), W)
        out.append((W - 0.25 * g)[:, 0].reshape(w.shape))
    if w.ndim == 0:
        return tuple(float(v) for v in out)
    return tuple(out)


def constant_step_escape_check(w):
    """True where ``|w| < 1/8`` implies both successors land outside ``(-1/8, 1/8)``.

    Points outside the neighbourhood pass trivially. Returns a bool for a
    scalar and a boolean array otherwise.
    """
    w = np.asarray(w, dtype=float)
    a, b = escape_successors(w)
    inside = np.abs(w) < ESCAPE_RADIUS
    ok = ~inside | ((np.abs(a) > ESCAPE_RADIUS) & (np.abs(b) > ESCAPE_RADIUS))
    return bool(ok) if w.ndim == 0 else ok


# --- correlated online line search -----------------------------------------


def sls_expectation_path(w1, c, schedule: ScheduleSpec, T) -> np.ndarray:
    """``E w_1, ..., E w_{T+1}`` of SGD with online SLS on the mismatched pair.

    With ``c >= 1/2`` and ``gamma_max >= 1`` the exact line search returns
    ``2(1-c)/L_i``, which makes
    ``E w_{k+1} = (1 - 2(1-c) alpha_k) E w_k + (3/8) 2(1-c) alpha_k``.
    """
    if c < 0.5:
        raise ParameterDomainError("the neighbourhood recursion needs c >= 1/2")
    if not c < 1:
        raise ParameterDomainError("Armijo constant must be below 1")
    alphas = alpha_sequence(schedule, 1, T) if T else np.zeros(0)
    if np.any(alphas > 1):
        raise ParameterDomainError("schedule must satisfy alpha_k <= 1")
    s = 2.0 * (1.0 - c)
    path = np.empty(T + 1)
    path[0] = w = float(w1)
    for k, a in enumerate(alphas, start=1):
        w = (1.0 - s * a) * w + NEIGHBOURHOOD_FLOOR * s * a
        path[k] = w
    return path


def sls_correlated_expectation(w1, c, schedule: ScheduleSpec, T) -> float:
    """Expected iterate after ``T`` steps of the recursion in :func:`sls_expectation_path`."""
    return float(sls_expectation_path(w1, c, schedule, T)[-1])


def simulate_sls_neighbourhood(seeds, T, schedule: ScheduleSpec, w1=1.0, interpolating=False, variant="online",
                               statistic="value", seed=0, probe_index="previous"):
    """Monte-Carlo ``(mean, standard error)`` of the final iterate over ``seeds`` runs.

    Uses the exact line search with ``c = 1/2`` and ``gamma_max = 1``.
    ``interpolating=True`` swaps in the pair whose components share the
    minimiser ``w = 1``. ``variant`` is ``"online"`` or ``"decorrelated"`` and
    ``statistic="abs"`` averages ``|w_T - w*|`` instead of ``w_T``.
    """
    if seeds < 1000:
        raise InsufficientSamplesError(f"need at least 1000 seeds, got {seeds}")
    p, w_star = (shared_minimizer_pair(), 1.0) if interpolating else (mismatched_curvature_pair(), 0.0)
    ls = LineSearchConfig(c=0.5, gamma_max=1.0, mode=LineSearchMode.EXACT_QUADRATIC)
    if variant == "online":
        policy = GammaPolicy.online_sls(ls)
    elif variant == "decorrelated":
        policy = GammaPolicy.decorrelated_sls(ls, probe_index)
    else:
        raise ParameterDomainError(f"unknown variant {variant!r}")
    ens = run_sgd_ensemble(p, schedule, policy, T, seed, lanes=seeds, w1=[w1])
    final = ens.final[:, 0]
    if statistic == "abs":
        final = np.abs(final - w_star)
    elif statistic != "value":
        raise ParameterDomainError(f"unknown statistic {statistic!r}")
    return float(final.mean()), float(final.std(ddof=1) / math.sqrt(seeds))


# --- misestimated smoothness -----------------------------------------------


@dataclass(frozen=True)
class MisestimationReport:
    k_prime: float
    k_floor: int
    factors_ok: bool  # 1 - nu alpha^k <= -2 for every k <= floor(k')
    alpha_identity_residual: float  # |alpha^{k'} - 3/nu| relative to 3/nu
    amplification: float  # |w_{floor(k')+1} - w*| / |w_1 - w*|
    log2_amplification: float
    bound_ok: bool  # |w_{floor(k')+1} - w*| >= 2^floor(k') |w_1 - w*|
    passed: bool


def misestimated_gd_trajectory(nu, beta, T, w1, x, y) -> AnalyticTrajectory:
    """GD on ``0.5 (x w - y)**2`` with ``gamma = nu / x**2`` and exponential ``alpha_k``."""
    if x == 0:
        raise ParameterDomainError("x must be non-zero")
    w_star = y / x
    a = alpha_sequence(ScheduleSpec.exponential(beta, T), 1, T)
    factors = 1.0 - nu * a
    with np.errstate(over="ignore", invalid="ignore"):  # large nu*T overflows to inf, checked in log space
        values = w_star + (w1 - w_star) * np.concatenate([[1.0], np.cumprod(factors)])
    params = {"nu": nu, "beta": beta, "T": T, "w1": w1, "x": x, "y": y}
    return AnalyticTrajectory(Construction.MISESTIMATED_GD, params, values, w_star, {"factors": factors})


def misestimated_gd_check(nu, beta, T, w1=1.0, x=1.0, y=0.0) -> MisestimationReport:
    """Certify the exponential blow-up of GD whose smoothness estimate is ``nu`` times too small.

    With ``k' = T ln(nu/3) / ln(T/beta)`` every factor ``1 - nu alpha^k`` with
    ``k <= k'`` is at most ``-2``, so after ``floor(k')`` steps the distance to
    the minimiser has grown by at least ``2**floor(k')``.
    """
    if not nu > 3:
        raise ParameterDomainError(f"the blow-up needs nu > 3, got {nu}")
    alpha = exp_base(beta, T)
    ell = math.log(T / beta)
    k_prime = T / ell * math.log(nu / 3.0)
    k_floor = min(math.floor(k_prime), T)
    traj = misestimated_gd_trajectory(nu, beta, T, w1, x, y)
    factors = traj.extra["factors"][:k_floor]
    factors_ok = bool(np.all(factors <= -2.0))
    alpha_kp = math.exp(k_prime * math.log(alpha))
    residual = abs(alpha_kp - 3.0 / nu) / (3.0 / nu)
    e1 = abs(w1 - traj.w_star)
    log2_amp = math.fsum(np.log2(np.abs(factors)))
    if e1 == 0:
        amp, bound_ok = 0.0, True
    else:
        amp = float(abs(traj.gaps[k_floor]) / e1)
        bound_ok = bool(log2_amp >= k_floor) if not math.isfinite(amp) else bool(amp >= 2.0**k_floor)
    return MisestimationReport(k_prime, k_floor, factors_ok, residual, amp, log2_amp, bound_ok,
                               factors_ok and bound_ok)


# --- sum-product identity --------------------------------------------------


def sum_prod_identity_check(alphas) -> float:
    """``|prod(1-a_k) + sum_k a_k prod_{i>k}(1-a_i) - 1|`` for ``a_k`` in ``[0, 1]``."""
    a = np.asarray(alphas, dtype=float)
    if a.size == 0:
        return 0.0
    if np.any((a < 0) | (a > 1)):
        raise ParameterDomainError("sequence entries must lie in [0, 1]")
    one_minus = 1.0 - a
    suffix = np.concatenate([np.cumprod(one_minus[::-1])[::-1][1:], [1.0]])  # prod_{i>k}
    return abs(math.fsum(np.concatenate([[np.prod(one_minus)], a * suffix])) - 1.0)


# --- verdict suite ---------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    detail: str


def _schedule_bound_verdicts():
    worst_a = worst_b = worst_c = math.inf
    for T in (100, 1000, 10000):
        for beta in (1.0, 2.0, 10.0):
            if not T > beta:
                continue
            s1, _ = partial_sums(ScheduleSpec.exponential(beta, T), T)
            worst_a = min(worst_a, s1 - exp_sum_lower_bound(T, beta))
            for kappa in (10.0, 100.0, 1000.0):
                worst_b = min(worst_b, decayed_weight_sum_bound(T, beta, kappa, 2) - decayed_weight_sum(T, beta, kappa, 2))
                worst_c = min(worst_c, decayed_weight_sum_bound(T, beta, kappa, 1) - decayed_weight_sum(T, beta, kappa, 1))
    x = np.logspace(-12, 6, 10_000) + 1.0
    m1 = float(np.min(reciprocal_log_margin(x)))
    xs = np.logspace(-6, 3, 100)
    gs = np.logspace(-6, 3, 100)
    X, G = np.meshgrid(xs, gs)
    m2 = float(np.min(exp_power_margin(X, G) / np.maximum(X, G)))
    return [
        Verdict("exp_sum_lower_bound", worst_a >= 0, f"min slack {worst_a:.3e}"),
        Verdict("decayed_weight_sum_squared_bound", worst_b >= 0, f"min slack {worst_b:.3e}"),
        Verdict("decayed_weight_sum_linear_bound", worst_c >= 0, f"min slack {worst_c:.3e}"),
        Verdict("reciprocal_log_inequality", m1 >= 0, f"min margin {m1:.3e}"),
        Verdict("exp_power_inequality", m2 >= -1e-12, f"min relative margin {m2:.3e}"),
    ]


def verdict_suite(mc_seeds: int = 10_000, rng_seed: int = 0) -> list[Verdict]:
    """Run every deterministic and Monte-Carlo certificate; returns one verdict per check."""
    out = []

    worst = 0.0
    for T in (10, 100, 1000, 10_000):
        tr = poly_gd_trajectory(2.0, 0.0, 1.0, T, 1.0)
        worst = max(worst, abs(tr.values[-1] * (T + 1) - 1.0))
    out.append(Verdict("poly_gd_harmonic_law", worst <= 1e-12, f"max relative error {worst:.3e}"))

    slack = math.inf
    for delta in (0.25, 0.5, 0.75):
        k0 = math.floor(2.0 ** (1.0 / delta))
        for T in sorted({k0, 10, 100, 1000, 10_000}):
            if T >= k0:
                e = poly_gd_trajectory(2.0, 0.0, delta, T, 1.0).extra
                slack = min(slack, e["log_gap"] - e["log_lower_bound"])
    out.append(Verdict("poly_gd_lower_bound", slack >= 0, f"min log slack {slack:.3e}"))

    ok, fails = True, []
    for nu in (5.0, 10.0, 100.0):
        for T in (100, 1000):
            r = misestimated_gd_check(nu, 1.0, T)
            if not r.passed:
                ok = False
                fails.append(f"nu={nu:g},T={T}")
    out.append(Verdict("misestimated_step_blowup", ok, "all cases pass" if ok else "failed: " + ", ".join(fails)))

    grid = np.linspace(-ESCAPE_RADIUS, ESCAPE_RADIUS, 10_002)[1:-1]
    esc = bool(np.all(constant_step_escape_check(grid)))
    out.append(Verdict("constant_step_escape", esc, f"{grid.size} grid points"))

    sched = ScheduleSpec.exponential(1.0, 1000)
    path = sls_expectation_path(1.0, 0.5, sched, 1000)
    floor_ok = bool(path.min() >= NEIGHBOURHOOD_FLOOR - 1e-12)
    mc, se = simulate_sls_neighbourhood(mc_seeds, 1000, sched, 1.0, seed=rng_seed)
    agree = abs(mc - path[-1]) <= 3 * se and mc + 3 * se >= NEIGHBOURHOOD_FLOOR
    out.append(Verdict("sls_neighbourhood_recursion", floor_ok, f"final {path[-1]:.12f}, min {path.min():.12f}"))
    out.append(Verdict("sls_neighbourhood_monte_carlo", agree, f"mean {mc:.6f} +- {se:.2e}"))

    rng = np.random.default_rng(rng_seed)
    res = max(sum_prod_identity_check(rng.random(int(rng.integers(1, 200)))) for _ in range(1000))
    out.append(Verdict("sum_product_identity", res <= 1e-10, f"max residual {res:.3e}"))

    out.extend(_schedule_bound_verdicts())
    return out
