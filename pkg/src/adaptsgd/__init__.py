"""Noise- and problem-adaptive step sizes for stochastic gradient methods.

Modules: ``schedules`` (decay sequences), ``problems`` (finite-sum oracles),
``linesearch`` (Armijo search), ``optimizers`` (SGD and accelerated SGD),
``lowerbounds`` (closed-form stalling constructions) and ``harness``
(experiment configs and CSV output).
"""

from .errors import (
    AdaptSGDError,
    ConfigError,
    ConvergenceError,
    DatasetParseError,
    EmptyDatasetError,
    InsufficientSamplesError,
    LineSearchFailure,
    NumericError,
    ParameterDomainError,
    UnsupportedProblemError,
    WrongOperationError,
)
from .linesearch import LineSearchConfig, LineSearchMode, LineSearchResult
from .optimizers import GammaPolicy, RunTrace, run_asgd, run_asgd_reformulated, run_sgd, run_sgd_averaged
from .problems import FiniteSumProblem, LinearModelProblem, QuadraticComponent, Reference
from .schedules import ScheduleKind, ScheduleSpec, alpha_at, exp_base, kr20_step, partial_sums

__version__ = "0.1.0"

__all__ = [
    "AdaptSGDError",
    "ConfigError",
    "ConvergenceError",
    "DatasetParseError",
    "EmptyDatasetError",
    "InsufficientSamplesError",
    "LineSearchFailure",
    "NumericError",
    "ParameterDomainError",
    "UnsupportedProblemError",
    "WrongOperationError",
    "LineSearchConfig",
    "LineSearchMode",
    "LineSearchResult",
    "GammaPolicy",
    "RunTrace",
    "run_asgd",
    "run_asgd_reformulated",
    "run_sgd",
    "run_sgd_averaged",
    "FiniteSumProblem",
    "LinearModelProblem",
    "QuadraticComponent",
    "Reference",
    "ScheduleKind",
    "ScheduleSpec",
    "alpha_at",
    "exp_base",
    "kr20_step",
    "partial_sums",
    "__version__",
]
