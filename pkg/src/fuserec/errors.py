"""Exception types shared across the package."""


class FuseRecError(Exception):
    """Base class for all package errors."""


class DimensionError(FuseRecError):
    """Operand shapes are incompatible with the requested operation."""


class EmptyGraphError(FuseRecError):
    """The interaction set contains no usable edges."""


class NonEdgeError(FuseRecError):
    """A per-edge quantity was requested for a node pair that is not an edge."""


class GradCheckError(FuseRecError):
    """The loss was non-finite at a finite-difference probe point."""

    def __init__(self, param_index: int, message: str):
        self.param_index = param_index
        self.message = message
        super().__init__(message)


class StaleCacheError(FuseRecError):
    """A hot-path request hit a cache built from different model parameters."""


class DataFormatError(FuseRecError):
    """An input file does not match any supported record layout."""


class ConfigError(FuseRecError):
    """A configuration file or experiment setting is invalid."""


class DivergenceError(FuseRecError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, batch: int, message: str):
        self.epoch = epoch
        self.batch = batch
        self.message = message
        super().__init__(f"epoch {epoch}, batch {batch}: {message}")
