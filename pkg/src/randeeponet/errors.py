"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Array or layer shapes do not line up."""


class NonFiniteError(FloatingPointError):
    """NaN or Inf showed up where only finite values are allowed."""


class SolverError(RuntimeError):
    """A PDE or linear solve failed."""


class TrainingError(RuntimeError):
    """Training aborted; message carries the epoch/batch position."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""
