"""Exception hierarchy shared by all modules."""


class OtdoaError(Exception):
    """Base class for every error raised by this package."""


class DomainError(OtdoaError, ValueError):
    """An argument is outside the operation's domain (bad size, range, shape)."""


class SingularGeometryError(OtdoaError, ArithmeticError):
    """The positioning geometry is degenerate (point on a BS, singular normal matrix)."""


class UnderdeterminedError(OtdoaError, ValueError):
    """Too few measurements to fix a 2D position."""


class TrainingDivergedError(OtdoaError, ArithmeticError):
    """Training produced a non-finite loss."""


class FormatError(OtdoaError, ValueError):
    """A model or dataset file is corrupt or does not match the expected schema."""


class ConfigError(OtdoaError, ValueError):
    """An experiment configuration is invalid or references missing inputs."""
