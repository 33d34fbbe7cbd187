"""Exception hierarchy. CLI exit codes map onto these classes."""


class NeuroPathError(Exception):
    exit_code = 1


class ConfigError(NeuroPathError, ValueError):
    """Invalid configuration value or usage."""

    exit_code = 1


class SchemaError(ConfigError):
    """Malformed partition or run-config file."""


class DataError(NeuroPathError, ValueError):
    """Input data cannot be processed (too short, NaN, mixed lengths...)."""

    exit_code = 2


class NumericError(NeuroPathError, ArithmeticError):
    """NaN or infinity reached a loss or root value."""

    exit_code = 3


class ContractError(NeuroPathError, ValueError):
    """A function precondition was violated by the caller."""

    exit_code = 1


class DimensionError(ContractError):
    """Operand shapes are incompatible."""
