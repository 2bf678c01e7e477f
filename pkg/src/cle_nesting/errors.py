"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class ConvergenceError(ArithmeticError):
    """A series or iterative solver failed to reach its tolerance."""


class ConfigError(ValueError):
    """A simulation or command configuration is invalid."""


class ResourceError(RuntimeError):
    """A computation would exceed a hard resource cap."""
