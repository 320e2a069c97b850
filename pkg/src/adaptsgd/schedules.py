"""Problem-independent decay sequences for SGD step sizes.

A step size factors as ``eta_k = gamma_k * alpha_k``: ``gamma_k`` carries the
problem scale (``1/L``, a line-search estimate, ...) and ``alpha_k`` is one
of the sequences below.

Index convention
----------------
Schedules are evaluated at whatever iteration index the caller passes. The
SGD runners use 1-based steps ``k = 1..T`` (so the exponential schedule
decays from ``alpha`` down to ``alpha**T = beta/T`` and the polynomial one
starts at ``2**-delta``); the accelerated runner uses 0-based steps
``k = 0..T-1``. ``alpha_at(spec, 0)`` is always 1.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterDomainError, WrongOperationError

__all__ = [
    "ScheduleKind",
    "KR20Constants",
    "ScheduleSpec",
    "exp_base",
    "alpha_at",
    "alpha_sequence",
    "kr20_step",
    "step_sequence",
    "partial_sums",
    "sum_growth_diagnostic",
    "exp_sum_lower_bound",
    "decayed_weight_sum",
    "decayed_weight_sum_bound",
    "reciprocal_log_margin",
    "exp_power_margin",
]


class ScheduleKind(str, enum.Enum):
    CONSTANT = "constant"
    POLYNOMIAL = "poly"
    EXPONENTIAL = "exp"
    KR20 = "kr20"


@dataclass(frozen=True)
class KR20Constants:
    """Smoothness, strong convexity and growth constant for the KR-20 schedule."""

    L: float
    mu: float
    rho: float = 1.0

    def __post_init__(self):
        if not (self.L > 0 and self.mu > 0):
            raise ParameterDomainError(f"KR20 needs L > 0 and mu > 0, got L={self.L}, mu={self.mu}")
        if self.rho < 1:
            raise ParameterDomainError(f"KR20 needs rho >= 1, got {self.rho}")

    @property
    def b(self) -> float:
        return max(2.0 * self.L**2 / self.mu, 2.0 * self.rho * self.L)


@dataclass(frozen=True)
class ScheduleSpec:
    """Declarative description of an ``alpha_k`` sequence.

    Use the named constructors rather than filling fields by hand.
    """

    kind: ScheduleKind
    delta: float = 0.0
    beta: float = 1.0
    horizon: int | None = None
    kr20: KR20Constants | None = None

    def __post_init__(self):
        kind = ScheduleKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is ScheduleKind.POLYNOMIAL and not 0.0 <= self.delta <= 1.0:
            raise ParameterDomainError(f"polynomial exponent must lie in [0, 1], got {self.delta}")
        if kind in (ScheduleKind.EXPONENTIAL, ScheduleKind.KR20):
            if self.horizon is None or int(self.horizon) != self.horizon or self.horizon < 1:
                raise ParameterDomainError(f"{kind.value} schedule needs a positive integer horizon")
            object.__setattr__(self, "horizon", int(self.horizon))
        if kind is ScheduleKind.EXPONENTIAL:
            exp_base(self.beta, self.horizon)  # validates beta
        if kind is ScheduleKind.KR20 and self.kr20 is None:
            raise ParameterDomainError("KR20 schedule needs its (L, mu, rho) constants")

    @classmethod
    def constant(cls) -> ScheduleSpec:
        return cls(ScheduleKind.CONSTANT)

    @classmethod
    def polynomial(cls, delta: float) -> ScheduleSpec:
        return cls(ScheduleKind.POLYNOMIAL, delta=delta)

    @classmethod
    def exponential(cls, beta: float, horizon: int) -> ScheduleSpec:
        return cls(ScheduleKind.EXPONENTIAL, beta=beta, horizon=horizon)

    @classmethod
    def kr20_schedule(cls, L: float, mu: float, rho: float, horizon: int) -> ScheduleSpec:
        return cls(ScheduleKind.KR20, horizon=horizon, kr20=KR20Constants(L, mu, rho))

    def describe(self) -> str:
        if self.kind is ScheduleKind.CONSTANT:
            return "constant"
        if self.kind is ScheduleKind.POLYNOMIAL:
            return f"poly(delta={self.delta:g})"
        if self.kind is ScheduleKind.EXPONENTIAL:
            return f"exp(beta={self.beta:g}, T={self.horizon})"
        c = self.kr20
        return f"kr20(L={c.L:g}, mu={c.mu:g}, rho={c.rho:g}, T={self.horizon})"


def exp_base(beta: float, T: int) -> float:
    """Base ``(beta/T)**(1/T)`` of the exponential schedule, in (0, 1]."""
    if T < 1:
        raise ParameterDomainError(f"horizon must be positive, got {T}")
    if not 1.0 <= beta <= T:
        raise ParameterDomainError(f"exponential schedule needs 1 <= beta <= T, got beta={beta}, T={T}")
    return math.exp(math.log(beta / T) / T)


def _check_index(spec: ScheduleSpec, k):
    if np.any(np.asarray(k) < 0):
        raise ParameterDomainError("iteration index must be non-negative")
    if spec.kind is ScheduleKind.EXPONENTIAL and np.any(np.asarray(k) > spec.horizon):
        raise ParameterDomainError(f"iteration index exceeds horizon {spec.horizon}")


def alpha_at(spec: ScheduleSpec, k: int) -> float:
    """Value of the decay sequence at iteration ``k``."""
    if spec.kind is ScheduleKind.KR20:
        raise WrongOperationError("KR20 produces full step sizes; use kr20_step")
    _check_index(spec, k)
    if spec.kind is ScheduleKind.CONSTANT:
        return 1.0
    if spec.kind is ScheduleKind.POLYNOMIAL:
        return float((k + 1) ** (-spec.delta))
    return (spec.beta / spec.horizon) ** (k / spec.horizon)  # exact beta/T at k = T


def alpha_sequence(spec: ScheduleSpec, start: int, stop: int) -> np.ndarray:
    """Vectorised ``alpha_at`` for ``k = start, ..., stop`` (inclusive)."""
    if spec.kind is ScheduleKind.KR20:
        raise WrongOperationError("KR20 produces full step sizes; use step_sequence")
    k = np.arange(start, stop + 1, dtype=float)
    _check_index(spec, k)
    if spec.kind is ScheduleKind.CONSTANT:
        return np.ones_like(k)
    if spec.kind is ScheduleKind.POLYNOMIAL:
        return (k + 1.0) ** (-spec.delta)
    return (spec.beta / spec.horizon) ** (k / spec.horizon)


def kr20_step(k: int, spec: ScheduleSpec) -> float:
    """Full step size of the constant-then-decay schedule at 0-based iteration ``k``."""
    if spec.kind is not ScheduleKind.KR20:
        raise WrongOperationError("kr20_step needs a KR20 schedule")
    c, T = spec.kr20, spec.horizon
    b = c.b
    half = math.ceil(T / 2)
    if T < b / c.mu or k < half:
        return 1.0 / b
    # algebraically 2 / (mu (2b/mu + k - half)), arranged to hit 1/b exactly at k = half
    return 2.0 / (2.0 * b + c.mu * (k - half))


def step_sequence(spec: ScheduleSpec, start: int, stop: int) -> np.ndarray:
    """Multiplier applied at each iteration ``start..stop``: ``alpha_k`` or, for KR20, the full step."""
    if spec.kind is ScheduleKind.KR20:
        return np.array([kr20_step(k, spec) for k in range(start, stop + 1)])
    return alpha_sequence(spec, start, stop)


def partial_sums(spec: ScheduleSpec, T: int) -> tuple[float, float]:
    """``(sum alpha_k, sum alpha_k**2)`` over ``k = 1..T`` with compensated summation.

    KR20 sums its full step sizes over the T iterations it would take (0-based).
    """
    if spec.kind is ScheduleKind.KR20:
        values = step_sequence(spec, 0, T - 1)
    else:
        values = alpha_sequence(spec, 1, T)
    return math.fsum(values), math.fsum(values * values)


def sum_growth_diagnostic(spec: ScheduleSpec, T: int) -> dict:
    """Both sums and their growth ratios ``sum/T`` and ``sum_sq/sqrt(T)``.

    No decaying schedule keeps the first ratio bounded below while keeping the
    second bounded above as T grows; this report lets one watch that happen.
    """
    s1, s2 = partial_sums(spec, T)
    return {
        "T": T,
        "sum_alpha": s1,
        "sum_alpha_sq": s2,
        "sum_over_T": s1 / T,
        "sum_sq_over_sqrt_T": s2 / math.sqrt(T),
    }


# Bounds on geometric sums of the exponential schedule. Each takes (T, beta)
# with T > beta so that ln(T/beta) > 0.


def _log_ratio(T, beta):
    if not T > beta >= 1:
        raise ParameterDomainError(f"need T > beta >= 1, got T={T}, beta={beta}")
    return math.log(T / beta)


def exp_sum_lower_bound(T: int, beta: float) -> float:
    """Lower bound ``(alpha*T - 2*beta) / ln(T/beta)`` on ``sum_{t=1}^T alpha**t``."""
    ell = _log_ratio(T, beta)
    return (exp_base(beta, T) * T - 2.0 * beta) / ell


def decayed_weight_sum(T: int, beta: float, kappa: float, power: int) -> float:
    """``sum_{k=1}^T alpha**(power*k) * exp(-(1/kappa) * sum_{i=k+1}^T alpha**i)``."""
    a = alpha_sequence(ScheduleSpec.exponential(beta, T), 1, T)
    tail = np.concatenate([np.cumsum(a[::-1])[::-1][1:], [0.0]])
    return math.fsum(a**power * np.exp(-tail / kappa))


def decayed_weight_sum_bound(T: int, beta: float, kappa: float, power: int) -> float:
    """Closed-form upper bound on :func:`decayed_weight_sum` for power 1 or 2."""
    ell = _log_ratio(T, beta)
    alpha = exp_base(beta, T)
    expo = 2.0 * beta / (kappa * ell)
    if expo > 700.0:
        return math.inf
    c2 = math.exp(expo)
    if power == 2:
        return 4.0 * kappa**2 * c2 * ell**2 / (math.e**2 * alpha**2 * T)
    if power == 1:
        return c2 * kappa * ell / (math.e * alpha)
    raise ParameterDomainError(f"bound known for power 1 or 2, got {power}")


# Elementary inequalities behind the bounds above, returned as margins that
# are non-negative whenever the inequality holds.


def reciprocal_log_margin(x):
    """``2/ln(x) - 1/(x-1)`` for ``x > 1``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 1):
        raise ParameterDomainError("need x > 1")
    return 2.0 / np.log(x) - 1.0 / (x - 1.0)


def exp_power_margin(x, gamma):
    """``log((gamma/(e x))**gamma) - log(exp(-x))`` for ``x, gamma > 0``."""
    x = np.asarray(x, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(x <= 0) or np.any(gamma <= 0):
        raise ParameterDomainError("need x > 0 and gamma > 0")
    return gamma * (np.log(gamma) - 1.0 - np.log(x)) + x
