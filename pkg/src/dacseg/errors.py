"""Exception types shared across the package.

Each maps onto a CLI exit code (see ``dacseg.cli``).
"""


class DACError(Exception):
    exit_code = 1


class ConfigError(DACError, ValueError):
    """Invalid configuration or hyperparameters."""

    exit_code = 2


class InputError(DACError, ValueError):
    """Arguments with wrong shapes, ranges or types."""

    exit_code = 2


class DataError(DACError):
    """Malformed dataset files or manifests."""

    exit_code = 3


class CheckpointVersionError(DataError):
    pass


class NumericError(DACError, ArithmeticError):
    """Non-finite loss components or divergence."""

    exit_code = 4
