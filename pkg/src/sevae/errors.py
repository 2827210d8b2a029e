"""Exception types shared across the package."""


class SevaeError(Exception):
    """Base class for all package errors."""


class DimensionError(SevaeError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(SevaeError, ValueError):
    """An input lies outside the domain of an operation (e.g. log of 0)."""


class ContractError(SevaeError, ValueError):
    """A precondition of a call was violated."""


class ConfigError(SevaeError, ValueError):
    """Invalid configuration or experiment request."""


class TrainingError(SevaeError, RuntimeError):
    """Training produced a non-finite value."""
