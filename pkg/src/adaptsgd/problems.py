"""Finite-sum objectives ``f(w) = (1/n) sum_i f_i(w)`` with exact per-component constants.

Every oracle works on *lanes*: ``W`` has shape ``(S, d)`` and the sampled
indices have shape ``(S,)`` or ``(S, B)``, so ``S`` independent runs can be
advanced with one numpy call. Single runs simply use ``S = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .errors import (
    ConvergenceError,
    InsufficientSamplesError,
    ParameterDomainError,
    UnsupportedProblemError,
)

__all__ = [
    "QuadraticComponent",
    "Reference",
    "FiniteSumProblem",
    "LinearModelProblem",
    "mismatched_curvature_pair",
    "shared_minimizer_pair",
    "random_quadratic_sum",
    "make_linear_problem",
    "full_gradient",
    "minibatch_gradient",
    "measure_noise",
    "solve_reference",
    "make_reference",
    "growth_constants",
    "estimate_rho",
    "MinibatchReport",
    "minibatch_bound_check",
]

SQUARED = "squared"
LOGISTIC = "logistic"


@dataclass(frozen=True)
class QuadraticComponent:
    """``f_i(w) = 0.5 * (<x, w> - y)**2``; smoothness ``||x||**2``, minimum 0."""

    x: np.ndarray
    y: float

    @property
    def smoothness(self) -> float:
        return float(np.dot(self.x, self.x))

    def _residual(self, w):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        return float(x @ np.atleast_1d(np.asarray(w, dtype=float))) - self.y, x

    def value(self, w):
        r, _ = self._residual(w)
        return 0.5 * r**2

    def grad(self, w):
        r, x = self._residual(w)
        return r * x


@dataclass(frozen=True)
class Reference:
    w_star: np.ndarray
    f_star: float
    sigma_sq: float


class FiniteSumProblem:
    """Interface for finite-sum oracles.

    Subclasses set ``n``, ``dim``, ``smoothness`` (array of ``L_i``), ``mu``
    and implement :meth:`batch_value_grad`, :meth:`batch_value`,
    :meth:`value`, :meth:`full_gradient` and :meth:`component_minima`.
    """

    n: int
    dim: int
    smoothness: np.ndarray
    mu: float
    reference: Reference | None = None

    @property
    def L(self) -> float:
        return float(np.max(self.smoothness))

    @property
    def kappa(self) -> float:
        return self.L / self.mu

    def batch_value_grad(self, idx, W):
        raise NotImplementedError

    def batch_value(self, idx, W):
        raise NotImplementedError

    def batch_grad(self, idx, W):
        return self.batch_value_grad(idx, W)[1]

    def full_value_grad_lanes(self, W):
        """``(f(w_s), grad f(w_s))`` for every lane ``s`` of ``W``."""
        vals = np.array([self.value(w) for w in W])
        return vals, np.array([self.full_gradient(w) for w in W])

    def value(self, w) -> float:
        raise NotImplementedError

    def full_gradient(self, w) -> np.ndarray:
        raise NotImplementedError

    def component_minima(self) -> np.ndarray:
        raise UnsupportedProblemError(f"{type(self).__name__} does not know its component minima")

    def _check_index(self, i):
        i = np.asarray(i)
        if np.any(i < 0) or np.any(i >= self.n):
            raise IndexError(f"component index out of range [0, {self.n})")

    def component_value_grad(self, i, w):
        """``(f_i(w), grad f_i(w))`` for one component and one point."""
        self._check_index(i)
        vals, grads = self.batch_value_grad(np.array([int(i)]), np.asarray(w, dtype=float).reshape(1, -1))
        return float(vals[0]), grads[0]

    def component_value(self, i, w) -> float:
        self._check_index(i)
        return float(self.batch_value(np.array([int(i)]), np.asarray(w, dtype=float).reshape(1, -1))[0])

    def component_min(self, i) -> float:
        self._check_index(i)
        return float(self.component_minima()[i])


class LinearModelProblem(FiniteSumProblem):
    """Linear model with squared or logistic loss and an L2 term ``(lam/2)||w||**2``.

    ``X`` may be a dense array or any scipy sparse matrix (stored as CSR).
    Squared loss: ``f_i = 0.5 (<x_i,w> - y_i)**2``, ``L_i = ||x_i||**2 + lam``.
    Logistic loss (labels +-1): ``f_i = log(1 + exp(-y_i <x_i,w>))``,
    ``L_i = ||x_i||**2 / 4 + lam``.
    """

    def __init__(self, X, targets, loss=SQUARED, lam=0.0, mu=None, reference=None):
        if loss not in (SQUARED, LOGISTIC):
            raise ParameterDomainError(f"unknown loss {loss!r}")
        if lam < 0:
            raise ParameterDomainError("regularisation must be non-negative")
        self.sparse = sp.issparse(X)
        if self.sparse:
            X = sp.csr_matrix(X, dtype=float)
            X.sort_indices()
            row_sq = np.asarray(X.multiply(X).sum(axis=1)).ravel()
        else:
            X = np.atleast_2d(np.asarray(X, dtype=float))
            row_sq = np.einsum("ij,ij->i", X, X)
        targets = np.asarray(targets, dtype=float).ravel()
        if targets.shape[0] != X.shape[0]:
            raise ParameterDomainError("one target per row required")
        if loss == LOGISTIC and not np.all(np.abs(targets) == 1.0):
            raise ParameterDomainError("logistic labels must be +1 or -1")
        self.X = X
        self.targets = targets
        self.loss = loss
        self.lam = float(lam)
        self.n, self.dim = X.shape
        self.row_sq = row_sq
        self.smoothness = (row_sq if loss == SQUARED else 0.25 * row_sq) + self.lam
        self.mu = float(mu) if mu is not None else self._default_mu()
        self.reference = reference
        self._minima = None

    @classmethod
    def from_components(cls, components, mu=None):
        X = np.array([np.atleast_1d(c.x) for c in components], dtype=float)
        y = np.array([c.y for c in components], dtype=float)
        return cls(X, y, SQUARED, 0.0, mu=mu)

    def _default_mu(self):
        if self.loss == SQUARED and not self.sparse and self.dim <= 2000:
            H = self.X.T @ self.X / self.n
            return float(max(np.linalg.eigvalsh(H)[0], 0.0) + self.lam)
        return self.lam

    # --- loss pieces -------------------------------------------------------

    def _loss_value(self, z, y):
        if self.loss == SQUARED:
            return 0.5 * (z - y) ** 2
        return np.logaddexp(0.0, -y * z)

    def _loss_deriv(self, z, y):
        if self.loss == SQUARED:
            return z - y
        return -y * expit(-y * z)

    # --- single-lane kernels (shared by full and mini-batch gradients) ------

    def _rows(self, idx):
        return self.X[idx]

    def _mean_value_grad_rows(self, idx, w):
        Xb = self._rows(idx)
        z = Xb @ w
        y = self.targets[idx]
        coef = self._loss_deriv(z, y)
        grad = Xb.T @ coef / len(idx)
        reg = 0.5 * self.lam * float(w @ w)
        return float(np.mean(self._loss_value(z, y))) + reg, np.asarray(grad).ravel() + self.lam * w

    # --- lane API ----------------------------------------------------------

    def batch_value_grad(self, idx, W):
        idx = np.asarray(idx)
        if idx.ndim == 1:
            idx = idx[:, None]
        W = np.asarray(W, dtype=float)
        if not self.sparse:
            Xb = self.X[idx]  # (S, B, d)
            z = np.einsum("sbd,sd->sb", Xb, W)
            y = self.targets[idx]
            coef = self._loss_deriv(z, y)
            grads = np.einsum("sb,sbd->sd", coef, Xb) / idx.shape[1] + self.lam * W
            vals = self._loss_value(z, y).mean(axis=1) + 0.5 * self.lam * np.einsum("sd,sd->s", W, W)
            return vals, grads
        vals = np.empty(W.shape[0])
        grads = np.empty_like(W)
        for s in range(W.shape[0]):
            if idx.shape[1] == 1:
                vals[s], grads[s] = self._sparse_row_value_grad(int(idx[s, 0]), W[s])
            else:
                vals[s], grads[s] = self._mean_value_grad_rows(idx[s], W[s])
        return vals, grads

    def _sparse_row_value_grad(self, i, w):
        # slice the CSR arrays directly; row indexing through scipy is far slower
        lo, hi = self.X.indptr[i], self.X.indptr[i + 1]
        cols, xv = self.X.indices[lo:hi], self.X.data[lo:hi]
        z = float(xv @ w[cols])
        y = self.targets[i]
        grad = self.lam * w
        grad[cols] += float(self._loss_deriv(z, y)) * xv
        return float(self._loss_value(z, y)) + 0.5 * self.lam * float(w @ w), grad

    def batch_grad(self, idx, W):
        idx = np.asarray(idx)
        W = np.asarray(W, dtype=float)
        if self.sparse or idx.ndim != 1:
            return self.batch_value_grad(idx, W)[1]
        Xb = self.X[idx]  # (S, d)
        coef = self._loss_deriv(np.einsum("sd,sd->s", Xb, W), self.targets[idx])
        return coef[:, None] * Xb + self.lam * W

    def full_value_grad_lanes(self, W):
        W = np.asarray(W, dtype=float)
        Z = np.asarray(self.X @ W.T)  # (n, S)
        y = self.targets[:, None]
        coef = self._loss_deriv(Z, y)
        G = np.asarray(self.X.T @ coef).T / self.n + self.lam * W
        reg = 0.5 * self.lam * np.einsum("sd,sd->s", W, W)
        return self._loss_value(Z, y).mean(axis=0) + reg, G

    def batch_value(self, idx, W):
        idx = np.asarray(idx)
        if idx.ndim == 1:
            idx = idx[:, None]
        W = np.asarray(W, dtype=float)
        reg = 0.5 * self.lam * np.einsum("sd,sd->s", W, W)
        if not self.sparse:
            z = np.einsum("sbd,sd->sb", self.X[idx], W)
        else:
            z = np.array([np.asarray(self.X[idx[s]] @ W[s]).ravel() for s in range(W.shape[0])])
        return self._loss_value(z, self.targets[idx]).mean(axis=1) + reg

    def value(self, w) -> float:
        return self._mean_value_grad_rows(np.arange(self.n), np.asarray(w, dtype=float))[0]

    def full_gradient(self, w) -> np.ndarray:
        return self._mean_value_grad_rows(np.arange(self.n), np.asarray(w, dtype=float))[1]

    def component_values(self, w) -> np.ndarray:
        """All ``f_i(w)`` at once."""
        w = np.asarray(w, dtype=float)
        z = np.asarray(self.X @ w).ravel()
        return self._loss_value(z, self.targets) + 0.5 * self.lam * float(w @ w)

    def component_grads(self, w) -> np.ndarray:
        """All ``grad f_i(w)`` as an ``(n, d)`` dense array."""
        w = np.asarray(w, dtype=float)
        z = np.asarray(self.X @ w).ravel()
        coef = self._loss_deriv(z, self.targets)
        rows = self.X.multiply(coef[:, None]).toarray() if self.sparse else self.X * coef[:, None]
        return rows + self.lam * w

    def component_minima(self) -> np.ndarray:
        if self._minima is None:
            self._minima = self._compute_minima()
        return self._minima

    def _compute_minima(self):
        a2, y, lam = self.row_sq, self.targets, self.lam
        if self.loss == SQUARED:
            if lam == 0.0:
                return np.where(a2 > 0, 0.0, 0.5 * y**2)
            return 0.5 * lam * y**2 / (a2 + lam)
        # logistic: minimiser lies on span(x_i); with s = y_i <x_i, w> the
        # component reads log(1+exp(-s)) + lam s^2 / (2 ||x_i||^2).
        out = np.full(self.n, math.log(2.0))
        nz = a2 > 0
        if lam == 0.0:
            out[nz] = 0.0  # infimum, approached as s -> inf
            return out
        c = lam / a2[nz]
        lo = np.zeros_like(c)
        hi = 1.0 / c  # derivative -expit(-s) + c s is >= 0 at s = 1/c
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            neg = c * mid - expit(-mid) < 0
            lo = np.where(neg, mid, lo)
            hi = np.where(neg, hi, mid)
            if np.all(hi - lo <= 1e-12 * np.maximum(1.0, hi)):
                break
        s = 0.5 * (lo + hi)
        out[nz] = np.logaddexp(0.0, -s) + 0.5 * c * s**2
        return out


# --- fixed constructions ---------------------------------------------------


def mismatched_curvature_pair() -> LinearModelProblem:
    """``f_1 = 0.5 (w-1)**2`` and ``f_2 = 0.5 (2w + 1/2)**2``: minimiser 0, ``L_1 = 1``, ``L_2 = 4``."""
    return LinearModelProblem(np.array([[1.0], [2.0]]), np.array([1.0, -0.5]))


def shared_minimizer_pair() -> LinearModelProblem:
    """Same curvatures as :func:`mismatched_curvature_pair` but both components vanish at ``w = 1``."""
    return LinearModelProblem(np.array([[1.0], [2.0]]), np.array([1.0, 2.0]))


def random_quadratic_sum(n, d, kappa, seed, noise=0.0) -> LinearModelProblem:
    """Least squares with rows spread over a spectrum so that ``L/mu`` is about ``kappa``.

    ``noise = 0`` gives an interpolating problem (every component vanishes at
    the common minimiser).
    """
    if n < d:
        raise ParameterDomainError("need n >= d for a strongly convex sum")
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    scales = np.geomspace(1.0, 1.0 / math.sqrt(kappa), d)
    X = rng.standard_normal((n, d)) * scales @ Q.T
    w_true = rng.standard_normal(d)
    y = X @ w_true + noise * rng.standard_normal(n)
    return LinearModelProblem(X, y)


def make_linear_problem(n, d, loss=SQUARED, lam=0.0, seed=0, condition=1.0, noise=0.1) -> LinearModelProblem:
    """Synthetic regression/classification data with column scales spanning ``condition``."""
    rng = np.random.default_rng(seed)
    scales = np.geomspace(1.0, 1.0 / math.sqrt(condition), d)
    X = rng.standard_normal((n, d)) * scales
    w_true = rng.standard_normal(d) / scales
    z = X @ w_true
    if loss == SQUARED:
        return LinearModelProblem(X, z + noise * rng.standard_normal(n), SQUARED, lam)
    flip = rng.random(n) < noise
    y = np.where(z >= 0, 1.0, -1.0)
    y[flip] *= -1.0
    return LinearModelProblem(X, y, LOGISTIC, lam)


# --- operations ------------------------------------------------------------


def full_gradient(p: FiniteSumProblem, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (p.dim,):
        raise ParameterDomainError(f"expected a vector of length {p.dim}")
    return p.full_gradient(w)


def minibatch_gradient(p: FiniteSumProblem, batch_size, rng, w) -> np.ndarray:
    """Average gradient over ``batch_size`` indices drawn uniformly without replacement."""
    if not 1 <= batch_size <= p.n:
        raise ParameterDomainError(f"batch size must lie in [1, {p.n}]")
    idx = np.sort(rng.choice(p.n, size=batch_size, replace=False))
    w = np.asarray(w, dtype=float)
    if isinstance(p, LinearModelProblem):
        return p._mean_value_grad_rows(idx, w)[1]
    return p.batch_value_grad(idx[None, :], w[None, :])[1][0]


def measure_noise(p: FiniteSumProblem, w_star) -> tuple[float, float]:
    """``(sigma^2, z^2)``: mean optimal objective gap and mean squared gradient at ``w_star``."""
    w_star = np.asarray(w_star, dtype=float)
    minima = p.component_minima()
    if isinstance(p, LinearModelProblem):
        vals = p.component_values(w_star)
        grads = p.component_grads(w_star)
    else:
        idx = np.arange(p.n)
        W = np.broadcast_to(w_star, (p.n, p.dim))
        vals, grads = p.batch_value_grad(idx, W)
    gaps = np.maximum(vals - minima, 0.0)  # clip solver round-off
    return math.fsum(gaps) / p.n, float(np.mean(np.einsum("ij,ij->i", grads, grads)))


def solve_reference(p: FiniteSumProblem, tol=1e-10, max_iter=1_000_000, w0=None) -> np.ndarray:
    """Full-batch gradient descent with step ``1/L`` until ``||grad f|| <= tol``.

    The step is halved whenever an iteration fails to decrease ``f``.
    """
    w = np.zeros(p.dim) if w0 is None else np.array(w0, dtype=float)
    step = 1.0 / p.L
    f = p.value(w)
    g = p.full_gradient(w)
    for _ in range(max_iter):
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            return w
        w_new = w - step * g
        f_new = p.value(w_new)
        if f_new > f + 8 * np.finfo(float).eps * max(1.0, abs(f)):  # ignore round-off plateaus
            step *= 0.5
            if step < 1e-300:
                break
            continue
        w, f = w_new, f_new
        g = p.full_gradient(w)
    raise ConvergenceError(f"reference solve did not reach tol={tol:g} in {max_iter} iterations",
                           float(np.linalg.norm(g)))


def make_reference(p: FiniteSumProblem, tol=1e-10, max_iter=1_000_000) -> Reference:
    w_star = solve_reference(p, tol=tol, max_iter=max_iter)
    sigma_sq, _ = measure_noise(p, w_star)
    return Reference(w_star=w_star, f_star=p.value(w_star), sigma_sq=sigma_sq)


def _affine_gradient_parts(p):
    if not isinstance(p, LinearModelProblem) or p.loss != SQUARED or p.sparse:
        raise UnsupportedProblemError("exact growth constants need a dense squared-loss problem")
    X, y, lam, n, d = p.X, p.targets, p.lam, p.n, p.dim
    H = X.T @ X / n + lam * np.eye(d)
    w_star = np.linalg.solve(H, X.T @ y / n)
    G = p.component_grads(w_star)  # grad f_i(w*)
    # grad f_i(w) = A_i e + G_i with A_i = x_i x_i^T + lam I and e = w - w*
    M = (X.T * (p.row_sq + 2 * lam)) @ X / n + lam**2 * np.eye(d)
    m = (X.T @ (np.einsum("ij,ij->i", X, G)) + lam * G.sum(axis=0)) / n
    z_sq = float(np.mean(np.einsum("ij,ij->i", G, G)))
    return H, M, m, z_sq, w_star


def growth_constants(p: FiniteSumProblem, rho=None) -> tuple[float, float]:
    """Valid growth-condition constants ``(rho, sigma^2)`` for a dense least-squares problem.

    ``E_i ||grad f_i(w)||^2 <= rho ||grad f(w)||^2 + sigma^2`` must hold for every w.
    For a given ``rho`` the smallest valid ``sigma^2`` is computed exactly; when
    ``rho`` is omitted twice the smallest admissible value is used.
    """
    H, M, m, z_sq, _ = _affine_gradient_parts(p)
    Hinv = np.linalg.inv(H)
    rho_min = float(np.linalg.eigvalsh(Hinv @ M @ Hinv)[-1])
    if rho is None:
        rho = 2.0 * rho_min
    if rho <= rho_min:
        raise ParameterDomainError(f"rho={rho} is not admissible; it must exceed {rho_min:.6g}")
    P = rho * H @ H - M
    return float(rho), z_sq + float(m @ np.linalg.solve(P, m))


def estimate_rho(p: FiniteSumProblem, sigma_sq, points) -> float:
    """Largest ``(E_i ||grad f_i||^2 - sigma^2) / ||grad f||^2`` over the sample points (at least 1)."""
    best = 1.0
    for w in points:
        gi = p.component_grads(w)
        g = p.full_gradient(w)
        gg = float(g @ g)
        if gg > 0:
            best = max(best, (float(np.mean(np.einsum("ij,ij->i", gi, gi))) - sigma_sq) / gg)
    return best


@dataclass(frozen=True)
class MinibatchReport:
    batch_size: int
    draws: int
    mc_mean: float  # Monte-Carlo E_B ||grad f_B(w)||^2
    mc_stderr: float
    exact_mean: float | None  # same expectation by enumerating every batch (small n only)
    full_grad_sq: float
    bound: float
    holds: bool
    rho: float
    sigma_sq: float


def minibatch_bound_check(p: FiniteSumProblem, batch_size, w, draws, rng, rho=None, sigma_sq=None,
                          exact_factor=False):
    """Check ``E_B ||grad f_B||^2 <= ((rho-1) q + 1) ||grad f||^2 + q sigma^2`` with ``q = (n-B)/(nB)``.

    Batches are drawn without replacement. The bound is accepted when the
    Monte-Carlo mean exceeds it by no more than three standard errors.

    Sampling without replacement scales the component variance by
    ``(n-B)/((n-1)B)``, which is larger than ``q``; near the minimiser the
    bound with ``q`` can therefore fail. ``exact_factor=True`` uses
    ``q = (n-B)/((n-1)B)``, for which the bound follows from the growth
    condition at every point.
    """
    if draws < 1000:
        raise InsufficientSamplesError(f"need at least 1000 draws, got {draws}")
    B, n = int(batch_size), p.n
    if not 1 <= B <= n:
        raise ParameterDomainError(f"batch size must lie in [1, {n}]")
    if rho is None or sigma_sq is None:
        rho, sigma_sq = growth_constants(p, rho)
    w = np.asarray(w, dtype=float)
    G = p.component_grads(w)
    g = G.mean(axis=0) if B < n else p.full_gradient(w)
    gg = float(g @ g)

    # Batch means via the component-gradient table; B = n reuses the full gradient.
    if B == n:
        mc_mean, mc_se = gg, 0.0
    else:
        idx = np.argsort(rng.random((draws, n)), axis=1)[:, :B]
        means = G[idx].mean(axis=1)
        samples = np.einsum("ij,ij->i", means, means)
        mc_mean = float(samples.mean())
        mc_se = float(samples.std(ddof=1) / math.sqrt(draws))

    exact = None
    if math.comb(n, B) <= 100_000:
        tot = math.fsum(float(np.dot(v, v)) for v in (G[list(c)].mean(axis=0) for c in combinations(range(n), B)))
        exact = gg if B == n else tot / math.comb(n, B)

    frac = (n - B) / ((n - 1) * B) if (exact_factor and n > 1) else (n - B) / (n * B)
    bound = ((rho - 1.0) * frac + 1.0) * gg + frac * sigma_sq
    return MinibatchReport(B, draws, mc_mean, mc_se, exact, gg, bound, mc_mean <= bound + 3.0 * mc_se,
                           float(rho), float(sigma_sq))
