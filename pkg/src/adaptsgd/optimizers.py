"""SGD, averaged-iterate SGD and accelerated SGD with full tracing.

Every runner advances ``lanes`` independent copies at once. A single run
(``lanes=1``) is driven by ``np.random.default_rng(seed)``; an ensemble shares
one generator that draws one index per lane per step, which gives independent
runs in distribution.

Random draws are consumed in blocks, update indices first and then, for the
decorrelated line search, probe indices. The block length depends only on
the lane count and batch size, so a longer horizon extends a shorter one.

Indexing: SGD takes steps ``k = 1..T`` with multiplier ``alpha_k`` and the
iterate before step ``k`` is ``w_k``. Accelerated SGD takes steps
``k = 0..T-1`` and starts from ``w_0 = y_0``. Checkpoint ``k`` always means
"after k steps".
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ParameterDomainError
from .linesearch import LineSearchConfig, armijo_backtrack_lanes
from .schedules import ScheduleKind, ScheduleSpec, alpha_sequence, step_sequence

__all__ = [
    "GammaKind",
    "GammaPolicy",
    "Checkpoint",
    "RunTrace",
    "EnsembleTrace",
    "sgd_step",
    "run_sgd",
    "run_sgd_ensemble",
    "run_sgd_averaged",
    "asgd_coeffs",
    "run_asgd",
    "run_asgd_reformulated",
    "DIVERGENCE_NORM",
]

DIVERGENCE_NORM = 1e12
_DRAW_BUDGET = 1 << 20  # ints per block of random draws


class GammaKind(str, enum.Enum):
    FIXED_INVERSE_L = "inverse_L"
    FIXED_SCALED = "scaled"
    ACCELERATED_INVERSE_RHO_L = "inverse_rho_L"
    ONLINE_SLS = "online_sls"
    DECORRELATED_SLS = "decorrelated_conservative"


@dataclass(frozen=True)
class GammaPolicy:
    """How the scale ``gamma_k`` of each step is produced."""

    kind: GammaKind
    L: float | None = None
    nu: float = 1.0
    rho: float = 1.0
    ls: LineSearchConfig | None = None
    probe_index: str = "previous"

    def __post_init__(self):
        object.__setattr__(self, "kind", GammaKind(self.kind))
        if self.uses_line_search:
            if self.ls is None:
                object.__setattr__(self, "ls", LineSearchConfig())
            if self.probe_index not in ("previous", "fresh"):
                raise ParameterDomainError(f"probe_index must be 'previous' or 'fresh', got {self.probe_index!r}")
        else:
            if self.L is None or not self.L > 0:
                raise ParameterDomainError("fixed step policies need L > 0")
            if not self.nu > 0:
                raise ParameterDomainError("nu must be positive")
            if self.rho < 1:
                raise ParameterDomainError("rho must be >= 1")

    @classmethod
    def inverse_L(cls, L):
        return cls(GammaKind.FIXED_INVERSE_L, L=L)

    @classmethod
    def scaled(cls, nu, L):
        return cls(GammaKind.FIXED_SCALED, L=L, nu=nu)

    @classmethod
    def accelerated(cls, rho, L):
        return cls(GammaKind.ACCELERATED_INVERSE_RHO_L, L=L, rho=rho)

    @classmethod
    def online_sls(cls, ls=None):
        return cls(GammaKind.ONLINE_SLS, ls=ls)

    @classmethod
    def decorrelated_sls(cls, ls=None, probe_index="previous"):
        return cls(GammaKind.DECORRELATED_SLS, ls=ls, probe_index=probe_index)

    @property
    def uses_line_search(self) -> bool:
        return self.kind in (GammaKind.ONLINE_SLS, GammaKind.DECORRELATED_SLS)

    @property
    def fixed_gamma(self) -> float | None:
        if self.kind is GammaKind.FIXED_INVERSE_L:
            return 1.0 / self.L
        if self.kind is GammaKind.FIXED_SCALED:
            return self.nu / self.L
        if self.kind is GammaKind.ACCELERATED_INVERSE_RHO_L:
            return 1.0 / (self.rho * self.L)
        return None


@dataclass
class Checkpoint:
    k: int
    grad_evals: int
    function_evals: int
    grad_norm: float
    dist_sq: float | None
    f_gap: float | None
    gamma: float
    alpha: float
    iterate: np.ndarray | None = None


@dataclass
class RunTrace:
    checkpoints: list
    final_iterate: np.ndarray
    seed: int
    status: str = "ok"
    averaged_iterate: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def iterations(self) -> np.ndarray:
        return np.array([c.k for c in self.checkpoints])

    @property
    def grad_norms(self) -> np.ndarray:
        return np.array([c.grad_norm for c in self.checkpoints])

    @property
    def iterates(self) -> np.ndarray:
        return np.array([c.iterate for c in self.checkpoints])


@dataclass
class EnsembleTrace:
    """Checkpoint statistics for every lane; arrays are ``(checkpoints, lanes)``."""

    k: np.ndarray
    grad_evals: np.ndarray
    function_evals: np.ndarray
    grad_norm: np.ndarray
    dist_sq: np.ndarray | None
    f_gap: np.ndarray | None
    gamma: np.ndarray
    alpha: np.ndarray
    final: np.ndarray
    diverged: np.ndarray
    seed: int
    iterates: list | None = None
    averaged: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def lane(self, s: int) -> RunTrace:
        """Trace of a single lane; checkpoints after a divergence hold NaN."""
        cps = []
        for c in range(len(self.k)):
            cps.append(Checkpoint(
                int(self.k[c]), int(self.grad_evals[c, s]), int(self.function_evals[c, s]),
                float(self.grad_norm[c, s]),
                None if self.dist_sq is None else float(self.dist_sq[c, s]),
                None if self.f_gap is None else float(self.f_gap[c, s]),
                float(self.gamma[c, s]), float(self.alpha[c]),
                None if self.iterates is None else self.iterates[c][s].copy(),
            ))
        avg = None if self.averaged is None else self.averaged[s].copy()
        status = "diverged" if self.diverged[s] else "ok"
        return RunTrace(cps, self.final[s].copy(), self.seed, status, avg,
                        {key: v[:, s] if isinstance(v, np.ndarray) and v.ndim == 2 else v
                         for key, v in self.extra.items()})


def sgd_step(w, gamma, alpha, g, iteration=None):
    """``w - gamma * alpha * g``."""
    if not gamma > 0:
        raise ParameterDomainError(f"gamma must be positive, got {gamma}")
    if not 0 < alpha <= 1:
        raise ParameterDomainError(f"alpha must lie in (0, 1], got {alpha}")
    w = np.asarray(w, dtype=float)
    g = np.asarray(g, dtype=float)
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(g))):
        raise NumericError("non-finite iterate or gradient", iteration)
    return w - gamma * alpha * g


# --- shared machinery ------------------------------------------------------


class _IndexDraws:
    """Blocked uniform index draws for ``lanes`` runs, with optional probe indices."""

    def __init__(self, rng, n, lanes, batch_size, probes):
        self.rng, self.n, self.S, self.B, self.probes = rng, n, lanes, batch_size, probes
        per_step = lanes * (batch_size if batch_size == 1 else n)
        self.block = max(1, min(4096, _DRAW_BUDGET // per_step))
        self.pos = self.block
        self.upd = self.prb = None

    def _draw(self):
        if self.B == 1:
            return self.rng.integers(0, self.n, size=(self.block, self.S))
        keys = self.rng.random((self.block, self.S, self.n))
        return np.sort(np.argsort(keys, axis=2)[:, :, : self.B], axis=2)

    def next(self):
        if self.pos == self.block:
            self.upd = self._draw()
            self.prb = self._draw() if self.probes else None
            self.pos = 0
        i = self.upd[self.pos]
        j = None if self.prb is None else self.prb[self.pos]
        self.pos += 1
        return i, j


def _initial_lanes(p, w1, lanes):
    w1 = np.zeros(p.dim) if w1 is None else np.asarray(w1, dtype=float).ravel()
    if w1.shape != (p.dim,):
        raise ParameterDomainError(f"initial point must have length {p.dim}")
    return np.tile(w1, (lanes, 1))


def _full_stats(p, W):
    """Gradient norm, squared distance to the reference and objective gap for every lane."""
    vals, G = p.full_value_grad_lanes(W)
    gn = np.sqrt(np.einsum("sd,sd->s", G, G))
    ref = p.reference
    if ref is None:
        return gn, None, None
    D = W - ref.w_star
    return gn, np.einsum("sd,sd->s", D, D), vals - ref.f_star


def _checkpoint_ks(T, every):
    if every is None or every < 1:
        every = max(T, 1)
    ks = list(range(0, T + 1, every))
    if ks[-1] != T:
        ks.append(T)
    return ks


class _Recorder:
    def __init__(self, p, T, every, lanes, keep_iterates):
        self.p = p
        self.ks = _checkpoint_ks(T, every)
        self.next = 0
        self.keep = keep_iterates
        self.rows = []

    def due(self, k):
        return self.next < len(self.ks) and self.ks[self.next] == k

    def record(self, k, W, ge, fe, gamma, alpha):
        gn, d2, fg = _full_stats(self.p, W)
        self.rows.append((k, ge.copy(), fe.copy(), gn, d2, fg, np.array(gamma, dtype=float, copy=True),
                          float(alpha), W.copy() if self.keep else None))
        self.next += 1

    def build(self, W, diverged, seed, averaged=None, extra=None):
        S = W.shape[0]
        col = lambda j: np.array([r[j] for r in self.rows])  # noqa: E731
        has_ref = self.p.reference is not None
        return EnsembleTrace(
            k=col(0), grad_evals=col(1), function_evals=col(2), grad_norm=col(3),
            dist_sq=col(4) if has_ref else None, f_gap=col(5) if has_ref else None,
            gamma=np.array([np.broadcast_to(r[6], (S,)) for r in self.rows]), alpha=col(7),
            final=W, diverged=diverged, seed=seed,
            iterates=[r[8] for r in self.rows] if self.keep else None,
            averaged=averaged, extra=extra or {},
        )


def _guard(W, diverged, threshold):
    """Freeze newly diverged lanes as NaN; returns the updated mask."""
    nrm = np.einsum("sd,sd->s", W, W)
    bad = ~(nrm <= threshold * threshold)
    if np.any(bad & ~diverged):
        diverged = diverged | bad
        W[diverged] = np.nan
    return diverged


def _sgd_multipliers(schedule, T):
    if T == 0:
        return np.zeros(1)
    if schedule.kind is ScheduleKind.KR20:
        return np.concatenate([[0.0], step_sequence(schedule, 0, T - 1)])
    return np.concatenate([[0.0], alpha_sequence(schedule, 1, T)])


# --- SGD -------------------------------------------------------------------


def run_sgd_ensemble(p, schedule: ScheduleSpec, policy: GammaPolicy | None, T: int, seed: int, lanes: int = 1,
                     checkpoint_every: int | None = None, w1=None, batch_size: int = 1, keep_iterates=False,
                     average=False, record_indices=False, stop_on_divergence=False,
                     divergence_norm=DIVERGENCE_NORM) -> EnsembleTrace:
    """Run ``lanes`` SGD copies for ``T`` steps of ``w <- w - gamma_k alpha_k grad f_{i_k}(w)``.

    A KR20 schedule supplies the full step, so ``policy`` is ignored and
    ``gamma`` is recorded as 1. With ``average=True`` the alpha-weighted mean
    of ``w_1..w_T`` is accumulated.
    """
    if int(T) != T or T < 0:
        raise ParameterDomainError("T must be a non-negative integer")
    if not 1 <= batch_size <= p.n:
        raise ParameterDomainError(f"batch size must lie in [1, {p.n}]")
    full_step = schedule.kind is ScheduleKind.KR20
    if not full_step and policy is None:
        raise ParameterDomainError("a gamma policy is required unless the schedule is KR20")
    mult = _sgd_multipliers(schedule, T)
    kind = None if full_step else policy.kind
    ls = None if full_step else policy.ls
    decor = kind is GammaKind.DECORRELATED_SLS
    online = kind is GammaKind.ONLINE_SLS
    fixed = 1.0 if full_step else policy.fixed_gamma

    rng = np.random.default_rng(seed)
    draws = _IndexDraws(rng, p.n, lanes, batch_size, probes=decor)
    W = _initial_lanes(p, w1, lanes)
    ge = np.zeros(lanes, dtype=np.int64)
    fe = np.zeros(lanes, dtype=np.int64)
    diverged = np.zeros(lanes, dtype=bool)
    gamma = np.full(lanes, fixed if fixed is not None else ls.gamma_max)
    rec = _Recorder(p, T, checkpoint_every, lanes, keep_iterates)
    rec.record(0, W, ge, fe, gamma, 1.0)
    wsum = np.zeros_like(W) if average else None
    asum = 0.0
    prev_i = None
    idx_log = [] if record_indices else None
    probe_log = [] if record_indices else None

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, T + 1):
            i, fresh = draws.next()
            if average:
                wsum += mult[k] * W
                asum += mult[k]
            if online:
                f_i, g = p.batch_value_grad(i, W)
                gamma, probes = armijo_backtrack_lanes(p, i, W, g, f_i, ls.gamma_max, ls, iteration=k)
                ge += batch_size
                fe += probes
            elif decor:
                j = fresh if (policy.probe_index == "fresh" or prev_i is None) else prev_i
                f_j, g_j = p.batch_value_grad(j, W)
                gamma, probes = armijo_backtrack_lanes(p, j, W, g_j, f_j, gamma, ls, iteration=k)
                g = p.batch_grad(i, W)
                ge += 2 * batch_size
                fe += probes
                if record_indices:
                    probe_log.append(j)
            else:
                g = p.batch_grad(i, W)
                ge += batch_size
            if record_indices:
                idx_log.append(i)
            prev_i = i
            W = W - (gamma * mult[k])[:, None] * g
            diverged = _guard(W, diverged, divergence_norm)
            if stop_on_divergence and diverged.all():
                rec.ks = rec.ks[: rec.next] + [k]
                rec.record(k, W, ge, fe, gamma, mult[k])
                break
            if rec.due(k):
                rec.record(k, W, ge, fe, gamma, mult[k])

    extra = {}
    if record_indices:
        extra["indices"] = np.array(idx_log)
        if decor:
            extra["probe_indices"] = np.array(probe_log)
    averaged = None
    if average:
        averaged = wsum / asum if asum > 0 else W.copy()
    return rec.build(W, diverged, seed, averaged, extra)


def run_sgd(p, schedule: ScheduleSpec, policy: GammaPolicy | None, T: int, seed: int,
            checkpoint_every: int | None = None, w1=None, batch_size: int = 1, keep_iterates=False,
            record_indices=False) -> RunTrace:
    """Single SGD run; stops early with status ``"diverged"`` if ``||w||`` exceeds the guard."""
    ens = run_sgd_ensemble(p, schedule, policy, T, seed, 1, checkpoint_every, w1, batch_size,
                           keep_iterates=keep_iterates, record_indices=record_indices, stop_on_divergence=True)
    return ens.lane(0)


def run_sgd_averaged(p, schedule: ScheduleSpec, L: float, T: int, seed: int, checkpoint_every=None, w1=None,
                     lanes: int = 1):
    """SGD with ``gamma = 1/(2L)`` plus the running average ``sum alpha_k w_k / sum alpha_k``.

    Returns ``(trace, averaged_iterate)`` for one lane, or the ensemble trace
    (whose ``averaged`` field holds every lane) when ``lanes > 1``.
    """
    if T < 1:
        raise ParameterDomainError("averaging needs at least one step")
    ens = run_sgd_ensemble(p, schedule, GammaPolicy.scaled(0.5, L), T, seed, lanes, checkpoint_every, w1,
                           average=True)
    if lanes > 1:
        return ens
    tr = ens.lane(0)
    return tr, tr.averaged_iterate


# --- accelerated SGD -------------------------------------------------------


def asgd_coeffs(r_prev, r_curr, alpha):
    """Extrapolation weight ``(1 - r_prev) r_prev a / (r_curr + r_prev**2 a)`` with ``a`` the step ratio."""
    den = r_curr + r_prev * r_prev * alpha
    if den == 0:
        raise NumericError("zero denominator in the momentum coefficient")
    return (1.0 - r_prev) * r_prev * alpha / den


def _asgd_steps(schedule, gamma, T):
    if schedule.kind is ScheduleKind.KR20:
        raise ParameterDomainError("accelerated SGD uses an alpha schedule, not KR20")
    if T == 0:
        return np.zeros(0)
    return gamma * alpha_sequence(schedule, 0, T - 1)


def _asgd_setup(p, mu, L, rho, T, schedule, beta):
    if not (mu > 0 and L > 0 and rho >= 1):
        raise ParameterDomainError("need mu > 0, L > 0 and rho >= 1")
    if schedule is None:
        schedule = ScheduleSpec.exponential(beta, max(T, 1))
    eta = _asgd_steps(schedule, 1.0 / (rho * L), T)
    r = np.sqrt(mu * eta)
    r0 = math.sqrt(mu / (rho * L))
    if r0 > 1 or np.any(r > 1):
        raise ParameterDomainError(f"momentum parameter exceeds 1 (mu={mu} > rho*L={rho * L})")
    return schedule, eta, r


def run_asgd(p, mu, L, rho, T, seed, schedule=None, beta=1.0, lanes=1, checkpoint_every=None, w0=None,
             keep_iterates=False, record_every_step=False):
    """Accelerated SGD in momentum form.

    ``y_k = w_k + b_k (w_k - w_{k-1})`` and ``w_{k+1} = y_k - eta_k grad f_{i_k}(y_k)``
    with ``eta_k = alpha_k / (rho L)`` and ``r_k = sqrt(mu eta_k)``. The default
    schedule is exponential with parameter ``beta`` over horizon ``T``. At the
    first step ``r_{-1} = r_0`` and ``w_{-1} = w_0``.

    ``record_every_step`` stores the ``r_k``, ``b_k`` and ``eta_k`` sequences in
    ``extra``. Returns a :class:`RunTrace` when ``lanes == 1``.
    """
    schedule, eta, r = _asgd_setup(p, mu, L, rho, T, schedule, beta)
    rng = np.random.default_rng(seed)
    draws = _IndexDraws(rng, p.n, lanes, 1, probes=False)
    W = _initial_lanes(p, w0, lanes)
    W_prev = W.copy()
    ge = np.zeros(lanes, dtype=np.int64)
    fe = np.zeros(lanes, dtype=np.int64)
    diverged = np.zeros(lanes, dtype=bool)
    rec = _Recorder(p, T, checkpoint_every, lanes, keep_iterates)
    rec.record(0, W, ge, fe, eta[0] if T else 0.0, 1.0)
    bs = np.empty(T)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(T):
            i, _ = draws.next()
            r_prev, ratio = (r[0], 1.0) if k == 0 else (r[k - 1], eta[k] / eta[k - 1])
            b = asgd_coeffs(r_prev, r[k], ratio)
            bs[k] = b
            Y = W + b * (W - W_prev)
            g = p.batch_grad(i, Y)
            ge += 1
            W_prev, W = W, Y - eta[k] * g
            diverged = _guard(W, diverged, DIVERGENCE_NORM)
            if rec.due(k + 1):
                rec.record(k + 1, W, ge, fe, eta[k], eta[k] * rho * L)
    extra = {"r": r, "b": bs, "eta": eta} if record_every_step else {}
    ens = rec.build(W, diverged, seed, extra=extra)
    return ens.lane(0) if lanes == 1 else ens


def run_asgd_reformulated(p, mu, L, rho, T, seed, schedule=None, beta=1.0, lanes=1, checkpoint_every=None,
                          w0=None, keep_iterates=False, record_every_step=False):
    """Accelerated SGD in three-sequence form with ``z_0 = w_0`` and ``q_0 = mu``.

    ``y_k = w_k - r_k q_k / (q_k + r_k mu) (w_k - z_k)``,
    ``w_{k+1} = y_k - eta_k grad f_{i_k}(y_k)``,
    ``z_{k+1} = w_k + (w_{k+1} - w_k) / r_k`` and
    ``q_{k+1} = (1 - r_k) q_k + r_k mu``, where ``r_k`` is the positive root of
    ``r^2 + r (q_k - mu) eta_k - q_k eta_k = 0``. It consumes the same index
    stream as :func:`run_asgd` for the same seed.
    """
    schedule, eta, _ = _asgd_setup(p, mu, L, rho, T, schedule, beta)
    rng = np.random.default_rng(seed)
    draws = _IndexDraws(rng, p.n, lanes, 1, probes=False)
    W = _initial_lanes(p, w0, lanes)
    Z = W.copy()
    q = float(mu)
    ge = np.zeros(lanes, dtype=np.int64)
    fe = np.zeros(lanes, dtype=np.int64)
    diverged = np.zeros(lanes, dtype=bool)
    rec = _Recorder(p, T, checkpoint_every, lanes, keep_iterates)
    rec.record(0, W, ge, fe, eta[0] if T else 0.0, 1.0)
    qs = np.empty(T + 1)
    rs = np.empty(T)
    qs[0] = q
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(T):
            i, _ = draws.next()
            lin = (q - mu) * eta[k]
            rk = 0.5 * (-lin + math.sqrt(lin * lin + 4.0 * q * eta[k]))
            Y = W - (rk * q / (q + rk * mu)) * (W - Z)
            g = p.batch_grad(i, Y)
            ge += 1
            W_next = Y - eta[k] * g
            Z = W + (W_next - W) / rk
            W = W_next
            q = (1.0 - rk) * q + rk * mu
            rs[k] = rk
            qs[k + 1] = q
            diverged = _guard(W, diverged, DIVERGENCE_NORM)
            if rec.due(k + 1):
                rec.record(k + 1, W, ge, fe, eta[k], eta[k] * rho * L)
    extra = {"q": qs, "r": rs, "eta": eta} if record_every_step else {}
    ens = rec.build(W, diverged, seed, extra=extra)
    return ens.lane(0) if lanes == 1 else ens
