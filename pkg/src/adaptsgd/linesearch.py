"""Armijo stochastic line search on a single sampled component.

Two reset policies are provided. The *online* search starts every iteration
from ``gamma_max``; the *decorrelated conservative* search probes an index
independent of the update index and starts from the previous step, so the
accepted step never increases.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import LineSearchFailure, ParameterDomainError

__all__ = [
    "LineSearchMode",
    "LineSearchConfig",
    "LineSearchResult",
    "armijo_holds",
    "armijo_backtrack",
    "armijo_backtrack_lanes",
    "online_sls_gamma",
    "decorrelated_conservative_gamma",
]


class LineSearchMode(str, enum.Enum):
    BACKTRACK = "backtrack"
    EXACT_QUADRATIC = "exact"


@dataclass(frozen=True)
class LineSearchConfig:
    """Armijo constant ``c``, ceiling ``gamma_max`` and backtracking controls."""

    c: float = 0.5
    gamma_max: float = 1.0
    shrink: float = 0.5
    max_backtracks: int = 64
    mode: LineSearchMode = LineSearchMode.BACKTRACK

    def __post_init__(self):
        object.__setattr__(self, "mode", LineSearchMode(self.mode))
        if not 0.0 < self.c < 1.0:
            raise ParameterDomainError(f"Armijo constant must lie in (0, 1), got {self.c}")
        if not self.gamma_max > 0:
            raise ParameterDomainError(f"gamma_max must be positive, got {self.gamma_max}")
        if not 0.0 < self.shrink < 1.0:
            raise ParameterDomainError(f"shrink factor must lie in (0, 1), got {self.shrink}")
        if int(self.max_backtracks) != self.max_backtracks or self.max_backtracks < 1:
            raise ParameterDomainError("max_backtracks must be a positive integer")


@dataclass(frozen=True)
class LineSearchResult:
    gamma: float
    probes: int
    satisfied: bool


def armijo_holds(f_new, f_w, gamma, g_sq, c):
    """``f_i(w - gamma g) <= f_i(w) - c gamma ||g||^2``."""
    return f_new <= f_w - c * gamma * g_sq


def _exact_gamma(ceiling, c, smoothness):
    return np.minimum(ceiling, 2.0 * (1.0 - c) / smoothness)


def armijo_backtrack(f_val_at, w, g, ceiling, cfg: LineSearchConfig, f_w=None, smoothness=None,
                     iteration=None) -> LineSearchResult:
    """Largest ``ceiling * shrink**j`` satisfying the Armijo condition.

    ``f_val_at`` evaluates the sampled component and ``g`` is that component's
    gradient at ``w``. ``f_w`` avoids one probe when the caller already has
    ``f_i(w)``. In exact mode ``smoothness`` (the component's ``L_i``) is
    required and no probes are spent.
    """
    if not ceiling > 0:
        raise ParameterDomainError(f"line-search ceiling must be positive, got {ceiling}")
    g = np.asarray(g, dtype=float)
    g_sq = float(np.dot(g.ravel(), g.ravel()))
    if g_sq == 0.0:
        return LineSearchResult(float(ceiling), 0, True)
    if cfg.mode is LineSearchMode.EXACT_QUADRATIC:
        if smoothness is None:
            raise ParameterDomainError("exact mode needs the component smoothness")
        return LineSearchResult(float(_exact_gamma(ceiling, cfg.c, smoothness)), 0, True)

    probes = 0
    if f_w is None:
        f_w = f_val_at(w)
        probes += 1
    gamma = float(ceiling)
    residual = np.inf
    for j in range(cfg.max_backtracks + 1):
        f_new = f_val_at(w - gamma * g)
        probes += 1
        if armijo_holds(f_new, f_w, gamma, g_sq, cfg.c):
            return LineSearchResult(gamma, probes, True)
        residual = f_new - (f_w - cfg.c * gamma * g_sq)
        if j < cfg.max_backtracks:
            gamma *= cfg.shrink
    raise LineSearchFailure(gamma, float(residual), iteration)


def armijo_backtrack_lanes(problem, idx, W, G, f_w, ceiling, cfg: LineSearchConfig, iteration=None):
    """Vectorised :func:`armijo_backtrack` over lanes.

    ``idx`` holds each lane's component (shape ``(S,)`` or ``(S, B)``), ``G``
    the matching gradients and ``f_w`` the matching values at ``W``. Returns
    ``(gammas, probes)``, both of shape ``(S,)``.
    """
    ceiling = np.broadcast_to(np.asarray(ceiling, dtype=float), (W.shape[0],))
    g_sq = np.einsum("sd,sd->s", G, G)
    zero = g_sq == 0.0
    probes = np.zeros(W.shape[0], dtype=np.int64)
    if cfg.mode is LineSearchMode.EXACT_QUADRATIC:
        L_i = problem.smoothness[idx] if np.ndim(idx) == 1 else problem.smoothness[idx].mean(axis=1)
        return np.where(zero, ceiling, _exact_gamma(ceiling, cfg.c, L_i)), probes

    gamma = ceiling.copy()
    active = ~zero & np.isfinite(g_sq)
    for j in range(cfg.max_backtracks + 1):
        lanes = np.flatnonzero(active)
        if lanes.size == 0:
            return gamma, probes
        gl = gamma[lanes]
        f_new = problem.batch_value(idx[lanes], W[lanes] - gl[:, None] * G[lanes])
        probes[lanes] += 1
        ok = armijo_holds(f_new, f_w[lanes], gl, g_sq[lanes], cfg.c)
        active[lanes[ok]] = False
        if j < cfg.max_backtracks:
            gamma[lanes[~ok]] *= cfg.shrink
    bad = np.flatnonzero(active)
    if bad.size:
        s = bad[0]
        f_new = problem.batch_value(idx[s:s + 1], W[s:s + 1] - gamma[s] * G[s:s + 1])[0]
        raise LineSearchFailure(float(gamma[s]), float(f_new - (f_w[s] - cfg.c * gamma[s] * g_sq[s])), iteration)
    return gamma, probes


def _component_search(p, i, w, ceiling, cfg):
    w = np.asarray(w, dtype=float)
    f_w, g = p.component_value_grad(i, w)
    return armijo_backtrack(lambda v: p.component_value(i, v), w, g, ceiling, cfg, f_w=f_w,
                            smoothness=float(p.smoothness[i]))


def online_sls_gamma(p, i_k, w, cfg: LineSearchConfig) -> LineSearchResult:
    """Search on the update component ``i_k`` starting from ``gamma_max``."""
    return _component_search(p, i_k, w, cfg.gamma_max, cfg)


def decorrelated_conservative_gamma(p, j_k, w, gamma_prev, cfg: LineSearchConfig) -> LineSearchResult:
    """Search on an independent component ``j_k`` starting from the previous step size."""
    if gamma_prev > cfg.gamma_max:
        raise ParameterDomainError("previous step size exceeds gamma_max")
    return _component_search(p, j_k, w, gamma_prev, cfg)
