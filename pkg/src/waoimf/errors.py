"""Exception hierarchy shared by every module."""


class WaoiError(Exception):
    """Base class for all package errors."""


class ConfigError(WaoiError):
    """Malformed or inconsistent configuration input."""


class DomainError(WaoiError):
    """A computation could not proceed for mathematical reasons."""


class ConvergenceError(DomainError):
    """An iterative method did not converge."""


class InfeasibleError(DomainError):
    """No admissible solution exists for the given inputs."""


class AssumptionError(DomainError):
    """A standing assumption of the model does not hold."""
