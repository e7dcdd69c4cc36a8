"""Exception types shared across the engine."""


class DepthForgeError(Exception):
    """Base class for all engine errors."""


class ShapeError(DepthForgeError, ValueError):
    """Operands have incompatible shapes."""


class ConfigError(DepthForgeError, ValueError):
    """Invalid configuration value or key."""


class DegenerateBatchError(DepthForgeError, RuntimeError):
    """No valid pixels survived masking; the caller must skip the step."""


class NumericError(DepthForgeError, ArithmeticError):
    """A non-finite value appeared where the contract requires finite ones."""


class CheckpointError(DepthForgeError, RuntimeError):
    """Checkpoint file is malformed or does not match the model."""
