"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ConfigError(ValueError):
    """A configuration value violates its contract."""


class DataError(ValueError):
    """Input data (manifest, blob, sample) is malformed."""


class ContractError(ValueError):
    """A function was called outside its precondition."""


class CompatibilityError(ValueError):
    """A checkpoint and a dataset/config do not fit together."""


class TrainingError(RuntimeError):
    """Training produced a non-finite loss component."""
