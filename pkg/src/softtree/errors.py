"""Exception hierarchy shared by every softtree module."""


class SoftTreeError(Exception):
    """Base class for all errors raised by softtree."""


class ConfigError(SoftTreeError, ValueError):
    """Invalid model, training, or benchmark configuration."""


class InputError(SoftTreeError, ValueError):
    """Bad input data: wrong shape, non-finite values, labels out of range."""


class DivergenceError(SoftTreeError, ArithmeticError):
    def __init__(self, epoch: int, message: str = "non-finite loss"):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch


class SchemaError(SoftTreeError, ValueError):
    """CSV or JSON document does not have the expected structure."""


class EmptyDatasetError(SoftTreeError, ValueError):
    pass


class StratificationError(SoftTreeError, ValueError):
    pass


class DegenerateLabelError(SoftTreeError, ValueError):
    """Labels contain a single class where two are required."""


class UndefinedAUCError(SoftTreeError, ValueError):
    pass


class InternalError(SoftTreeError, RuntimeError):
    """Inconsistent internal state, e.g. parameter/gradient shape mismatch."""
