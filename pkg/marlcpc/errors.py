"""Errors and warnings"""


class ContractError(ValueError):
    """Raised when a function is called with inputs that violate its preconditions"""

    pass


class NumericalError(FloatingPointError):
    """Raised when a value, gradient or loss becomes NaN or infinite"""

    pass


class ConditionError(KeyError):
    """Raised when an agent condition is invalid or unsupported for an operation"""

    pass


class EnvironmentNameError(KeyError):
    """Raised when an environment name is not supported"""

    pass


class ConfigError(KeyError):
    """Raised when a run configuration or sweep manifest is invalid"""

    pass


class CheckpointError(IOError):
    """Raised when a checkpoint file cannot be read"""

    pass
