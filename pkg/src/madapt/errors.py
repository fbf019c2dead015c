"""Exception hierarchy shared by every module."""


class MadaptError(Exception):
    """Base class for all errors raised by madapt."""


class DimensionError(MadaptError, ValueError):
    """Tensor shapes are incompatible with an operation."""


class ContractError(MadaptError, ValueError):
    """A caller violated an operation's precondition."""


class ConfigError(MadaptError, ValueError):
    """A configuration value or weight set is invalid."""


class NumericError(MadaptError, ArithmeticError):
    """A computation produced non-finite values or failed to converge."""


class FormatError(MadaptError, ValueError):
    """A file does not match the expected binary or image format."""
