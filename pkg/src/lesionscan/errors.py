"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor or layer shape mismatch."""


class ConfigError(ValueError):
    """Invalid hyperparameter, option, or precondition violation."""


class DatasetError(Exception):
    """Manifest or image data that cannot be loaded as requested."""


class ModelFormatError(Exception):
    """Corrupt, truncated, or unsupported model file."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""
