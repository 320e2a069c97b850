"""Experiment configuration, dataset loading and multi-seed orchestration."""

from .config import DEFAULT_RHO_GRID, ExperimentConfig, Method
from .experiment import (
    THREADS_ENV,
    AggregateStats,
    ExperimentResult,
    aggregate,
    build_problem,
    resolve_constants,
    run_experiment,
    run_single,
)
from .libsvm import load_libsvm, parse_libsvm

__all__ = [
    "DEFAULT_RHO_GRID",
    "ExperimentConfig",
    "Method",
    "THREADS_ENV",
    "AggregateStats",
    "ExperimentResult",
    "aggregate",
    "build_problem",
    "resolve_constants",
    "run_experiment",
    "run_single",
    "load_libsvm",
    "parse_libsvm",
]
