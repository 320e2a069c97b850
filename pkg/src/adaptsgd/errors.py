"""Exception types raised across the package."""


class AdaptSGDError(Exception):
    """Base class for all package errors."""


class ParameterDomainError(AdaptSGDError, ValueError):
    """A parameter lies outside the domain where the operation is defined."""


class WrongOperationError(AdaptSGDError, TypeError):
    """The operation does not apply to this kind of input (e.g. KR20 spec to alpha_at)."""


class NumericError(AdaptSGDError, ArithmeticError):
    """A non-finite value appeared during an update."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class LineSearchFailure(AdaptSGDError, RuntimeError):
    """Backtracking exhausted its budget without satisfying the Armijo condition."""

    def __init__(self, gamma, residual, iteration=None):
        msg = f"Armijo condition not met; last gamma={gamma:.3e}, residual={residual:.3e}"
        if iteration is not None:
            msg += f" (iteration {iteration})"
        super().__init__(msg)
        self.gamma = gamma
        self.residual = residual
        self.iteration = iteration


class ConvergenceError(AdaptSGDError, RuntimeError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, grad_norm):
        super().__init__(f"{message}; final gradient norm {grad_norm:.3e}")
        self.grad_norm = grad_norm


class InsufficientSamplesError(AdaptSGDError, ValueError):
    """Too few Monte-Carlo samples for the requested statistic."""


class UnsupportedProblemError(AdaptSGDError, ValueError):
    """The problem does not provide the quantity requested."""


class DatasetParseError(AdaptSGDError, ValueError):
    """Malformed LIBSVM input."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class EmptyDatasetError(DatasetParseError):
    """The dataset file holds no examples."""


class ConfigError(AdaptSGDError, ValueError):
    """Invalid or unresolvable experiment configuration."""
