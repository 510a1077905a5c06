"""Error categories with process exit codes for the CLI."""


class AtscLabError(Exception):
    exit_code = 1


class ConfigError(AtscLabError):
    """Invalid scenario/geometry/training configuration."""
    exit_code = 2


class DataError(AtscLabError):
    """Malformed or inconsistent input data (logs, streams, sequencing)."""
    exit_code = 3


class NumericError(AtscLabError):
    """Numerical failure (NaN loss, divergent training)."""
    exit_code = 4
