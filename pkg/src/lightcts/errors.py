"""Exception types raised across the package."""


class LightCtsError(Exception):
    """Base class for every error raised by lightcts."""


class ShapeError(LightCtsError, ValueError):
    """Operand shapes are incompatible."""


class DegenerateMaskError(LightCtsError, ValueError):
    """A softmax row is masked out entirely."""


class ContractError(LightCtsError, RuntimeError):
    """An API precondition was violated (e.g. backward on a non-scalar)."""


class FormatError(LightCtsError, ValueError):
    """A dataset or checkpoint file is malformed."""


class InsufficientLengthError(LightCtsError, ValueError):
    """A series is too short for the requested windowing."""


class ConfigError(LightCtsError, ValueError):
    """A configuration value violates a structural constraint."""


class UndefinedMetricError(LightCtsError, ValueError):
    """A metric is undefined for the given data (e.g. constant truth)."""


class TrainingError(LightCtsError, RuntimeError):
    """Training diverged (NaN/inf loss)."""
