"""Exception types shared across the package."""


class QuakecastError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(QuakecastError, ValueError):
    """Operands have incompatible shapes; the message names both."""


class DomainError(QuakecastError, ValueError):
    """An input violates an operation's precondition."""


class ConfigError(QuakecastError, ValueError):
    """A configuration value is missing, malformed, or inconsistent."""


class TrainingError(QuakecastError, RuntimeError):
    """Training aborted, e.g. on a non-finite loss or gradient."""


class CheckpointError(QuakecastError, RuntimeError):
    """A checkpoint file is unreadable or does not match the model spec."""
