"""Error taxonomy shared across the package."""


class FusionError(Exception):
    """Base class for every error this package raises deliberately."""


class DimensionError(FusionError):
    """Shape or axis mismatch between arrays/tensors."""


class ContractError(FusionError):
    """An API precondition was violated (non-scalar loss, live reference, ...)."""


class ParameterError(FusionError):
    """A numeric argument is out of its valid range."""


class ConfigError(FusionError):
    """Unknown key or invalid value in a training configuration."""


class FormatError(FusionError):
    """Malformed on-disk data.  Carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class CheckpointError(FormatError):
    """Malformed or incompatible checkpoint file."""
