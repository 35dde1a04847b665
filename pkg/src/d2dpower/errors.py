"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid configuration: bad value, unknown key, or unreadable file."""


class NumericalDomainError(ValueError):
    """An operation left its numerical domain (log of non-positive, degenerate denominator)."""


class CheckpointError(ValueError):
    """Checkpoint file is malformed or incompatible with the requested model."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""
