"""Multi-seed experiment orchestration, aggregation and CSV output.

Layout written under the output directory::

    <METHOD>[_rho<r>]/seed<s>.csv    one file per run
    <METHOD>[_rho<r>]/aggregate.csv  mean and std over seeds
    summary.csv                      one line per grid value, best flagged

Every CSV starts with ``#`` lines echoing the resolved configuration. Floats
are written with 17 significant digits so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import AdaptSGDError, ConfigError
from ..optimizers import GammaPolicy, RunTrace, run_asgd, run_sgd
from ..problems import LinearModelProblem, make_linear_problem, make_reference, random_quadratic_sum
from ..schedules import ScheduleSpec
from .config import ExperimentConfig, Method
from .libsvm import load_libsvm

__all__ = [
    "THREADS_ENV",
    "AggregateStats",
    "ExperimentResult",
    "build_problem",
    "resolve_constants",
    "run_single",
    "aggregate",
    "format_float",
    "run_experiment",
]

THREADS_ENV = "ADAPTSGD_THREADS"
AGGREGATE_COLUMNS = ["grad_evals", "mean_grad_norm", "std_grad_norm", "mean_dist_sq", "mean_fgap", "n_diverged"]
RUN_COLUMNS = ["k", "grad_evals", "function_evals", "grad_norm", "dist_sq", "f_gap", "gamma", "alpha"]


@dataclass
class AggregateStats:
    """Per-checkpoint statistics over seeds; diverged runs are excluded from means and counted."""

    label: str
    rho: float | None
    k: np.ndarray
    grad_evals: np.ndarray
    mean_grad_norm: np.ndarray
    std_grad_norm: np.ndarray
    mean_dist_sq: np.ndarray | None
    mean_fgap: np.ndarray | None
    n_diverged: np.ndarray
    statuses: list = field(default_factory=list)

    @property
    def final_mean_grad_norm(self) -> float:
        return float(self.mean_grad_norm[-1])


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    constants: tuple
    groups: list
    best: AggregateStats
    traces: dict
    files: list


def build_problem(cfg: ExperimentConfig) -> LinearModelProblem:
    if cfg.problem == "libsvm":
        try:
            return load_libsvm(cfg.data, cfg.loss, cfg.lam)
        except OSError as exc:
            raise ConfigError(f"cannot read dataset {cfg.data}: {exc}") from exc
    if cfg.problem == "quadratic":
        p = random_quadratic_sum(cfg.n, cfg.d, cfg.condition, cfg.data_seed, cfg.noise)
        if cfg.lam:
            p = LinearModelProblem(p.X, p.targets, "squared", cfg.lam)
        return p
    return make_linear_problem(cfg.n, cfg.d, cfg.loss, cfg.lam, cfg.data_seed, cfg.condition, cfg.noise)


def resolve_constants(p: LinearModelProblem, cfg: ExperimentConfig, need_mu: bool = True):
    """``(L, mu, rho_grid)`` from explicit values or the smoothness and regularisation bounds.

    ``L = auto`` is ``max_i ||x_i||^2 + lam`` (squared) or ``max_i ||x_i||^2/4 + lam``
    (logistic); ``mu = auto`` is ``lam`` and ``mu = exact`` the problem's own
    strong-convexity modulus. ``mu`` is ``None`` when not needed.
    """
    L = p.L if cfg.L == "auto" else float(cfg.L)
    if not L > 0:
        raise ConfigError("L must be positive")
    mu = None
    if need_mu:
        if cfg.mu == "auto":
            if p.lam == 0:
                raise ConfigError("mu = auto needs lambda > 0 (mu would be 0); set mu explicitly or mu = exact")
            mu = p.lam
        elif cfg.mu == "exact":
            mu = p.mu
        else:
            mu = float(cfg.mu)
        if not mu > 0:
            raise ConfigError("mu must be positive")
    return L, mu, cfg.rho_grid()


def _schedule(cfg, T, L, mu, rho):
    kind = cfg.schedule_kind
    if kind == "constant":
        return ScheduleSpec.constant()
    if kind == "poly":
        return ScheduleSpec.polynomial(cfg.delta)
    if kind == "kr20":
        return ScheduleSpec.kr20_schedule(L, mu, rho, T)
    return ScheduleSpec.exponential(cfg.beta, T)


def _ls_config(cfg, L):
    if cfg.ls_gamma_max_over_L is None:
        return cfg.ls
    return cfg.ls.__class__(cfg.ls.c, cfg.ls_gamma_max_over_L / L, cfg.ls.shrink, cfg.ls.max_backtracks, cfg.ls.mode)


def run_single(p, cfg: ExperimentConfig, L, mu, rho, seed) -> RunTrace:
    """One run of the configured method; never raises for divergence or line-search failure."""
    T = cfg.horizon(p.n)
    every = cfg.checkpoint_interval(p.n)
    w1 = None if cfg.w1 is None else np.asarray(cfg.w1, dtype=float)
    sched = _schedule(cfg, T, L, mu, rho)
    m = cfg.method
    try:
        if m.accelerated:
            return run_asgd(p, mu, L, rho, T, seed, schedule=sched, checkpoint_every=every, w0=w1)
        if m is Method.KR20:
            policy = None
        elif m.line_search:
            ls = _ls_config(cfg, L)
            policy = (GammaPolicy.online_sls(ls) if cfg.variant == "online"
                      else GammaPolicy.decorrelated_sls(ls, cfg.probe_index))
        else:
            policy = GammaPolicy.inverse_L(L)
        return run_sgd(p, sched, policy, T, seed, checkpoint_every=every, w1=w1, batch_size=cfg.batch_size)
    except AdaptSGDError as exc:
        if isinstance(exc, ConfigError):
            raise
        tr = RunTrace([], np.full(p.dim, np.nan), seed, status=f"failed: {exc}")
        return tr


def _checkpoint_grid(T, every):
    ks = list(range(0, T + 1, every))
    if ks[-1] != T:
        ks.append(T)
    return np.array(ks)


def aggregate(label, rho, traces, ks, per_step_evals) -> AggregateStats:
    """Mean and population std of each checkpoint over the runs that are still finite there."""
    C, R = len(ks), len(traces)
    gn = np.full((C, R), np.nan)
    d2 = np.full((C, R), np.nan)
    fg = np.full((C, R), np.nan)
    pos = {int(k): c for c, k in enumerate(ks)}
    has_ref = False
    for r, tr in enumerate(traces):
        for cp in tr.checkpoints:
            c = pos.get(cp.k)
            if c is None:
                continue
            gn[c, r] = cp.grad_norm
            if cp.dist_sq is not None:
                has_ref = True
                d2[c, r] = cp.dist_sq
                fg[c, r] = cp.f_gap
    alive = np.isfinite(gn)
    n_div = R - alive.sum(axis=1)

    def mean(a):
        out = np.full(C, np.nan)
        for c in range(C):
            v = a[c][alive[c]]
            if v.size:
                out[c] = math.fsum(v) / v.size
        return out

    mgn = mean(gn)
    std = np.full(C, np.nan)
    for c in range(C):
        v = gn[c][alive[c]]
        if v.size:
            std[c] = math.sqrt(math.fsum((v - mgn[c]) ** 2) / v.size)
    return AggregateStats(label, rho, np.asarray(ks), np.asarray(ks) * per_step_evals, mgn, std,
                          mean(d2) if has_ref else None, mean(fg) if has_ref else None, n_div,
                          [tr.status for tr in traces])


def format_float(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _header(cfg, L, mu, rho, n, d, extra=()):
    lines = [f"# {k} = {v}" for k, v in cfg.header_items()]
    lines += [f"# resolved.L = {format_float(L)}", f"# resolved.mu = {format_float(mu)}",
              f"# resolved.rho = {format_float(rho)}", f"# problem.n = {n}", f"# problem.d = {d}",
              f"# resolved.T = {cfg.horizon(n)}", f"# resolved.checkpoint_every = {cfg.checkpoint_interval(n)}",
              f"# seed_list = {','.join(str(s) for s in cfg.seed_list)}"]
    lines += [f"# {line}" for line in extra]
    return "\n".join(lines) + "\n"


def _csv_text(header, columns, rows):
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def _run_rows(tr):
    return [[cp.k, cp.grad_evals, cp.function_evals, format_float(cp.grad_norm), format_float(cp.dist_sq),
             format_float(cp.f_gap), format_float(cp.gamma), format_float(cp.alpha)] for cp in tr.checkpoints]


def _aggregate_rows(st):
    rows = []
    for c in range(len(st.k)):
        rows.append([int(st.grad_evals[c]), format_float(st.mean_grad_norm[c]), format_float(st.std_grad_norm[c]),
                     format_float(None if st.mean_dist_sq is None else st.mean_dist_sq[c]),
                     format_float(None if st.mean_fgap is None else st.mean_fgap[c]), int(st.n_diverged[c])])
    return rows


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer") from None


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads=None, problem=None) -> ExperimentResult:
    """Run every (grid value, seed) pair, write per-run and aggregate CSVs, pick the best grid value.

    The best grid value has the smallest mean gradient norm at the final
    checkpoint. Results do not depend on ``threads``.
    """
    p = build_problem(cfg) if problem is None else problem
    if cfg.reference and p.reference is None:
        p.reference = make_reference(p)
    m = cfg.method
    L, mu, grid = resolve_constants(p, cfg, need_mu=m.uses_rho)
    T, every = cfg.horizon(p.n), cfg.checkpoint_interval(p.n)
    ks = _checkpoint_grid(T, every)
    per_step = cfg.batch_size * (2 if m.line_search and cfg.variant != "online" else 1)
    threads = default_threads() if threads is None else max(1, int(threads))
    out = Path(out_dir if out_dir is not None else cfg.output)

    tasks = [(rho, seed) for rho in grid for seed in cfg.seed_list]
    if threads == 1:
        results = [run_single(p, cfg, L, mu, rho, seed) for rho, seed in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda t: run_single(p, cfg, L, mu, *t), tasks))

    groups, files, traces = [], [], {}
    for gi, rho in enumerate(grid):
        label = m.value if rho is None else f"{m.value}_rho{format_float(rho)}"
        trs = results[gi * cfg.seeds:(gi + 1) * cfg.seeds]
        traces[rho] = trs
        for seed, tr in zip(cfg.seed_list, trs):
            path = out / label / f"seed{seed}.csv"
            header = _header(cfg, L, mu, rho, p.n, p.dim, [f"seed = {seed}", f"status = {tr.status}"])
            _write(path, _csv_text(header, RUN_COLUMNS, _run_rows(tr)))
            files.append(path)
        st = aggregate(label, rho, trs, ks, per_step)
        groups.append(st)
        header = _header(cfg, L, mu, rho, p.n, p.dim, [f"status.{s} = {t.status}" for s, t in zip(cfg.seed_list, trs)])
        path = out / label / "aggregate.csv"
        _write(path, _csv_text(header, AGGREGATE_COLUMNS, _aggregate_rows(st)))
        files.append(path)

    finite = [g for g in groups if np.isfinite(g.final_mean_grad_norm)]
    best = min(finite, key=lambda g: g.final_mean_grad_norm) if finite else groups[0]
    summary = [[g.label, format_float(g.rho), format_float(g.final_mean_grad_norm), int(g.n_diverged[-1]),
                int(g is best)] for g in groups]
    path = out / "summary.csv"
    _write(path, _csv_text(_header(cfg, L, mu, None, p.n, p.dim), ["label", "rho", "final_mean_grad_norm",
                                                                    "n_diverged", "best"], summary))
    files.append(path)
    return ExperimentResult(cfg, (L, mu, grid), groups, best, traces, files)
