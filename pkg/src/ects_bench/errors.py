"""Exception hierarchy shared across the library.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericError -> 3.
"""


class EctsBenchError(Exception):
    """Base class for all library errors."""


class ConfigError(EctsBenchError):
    """Invalid configuration (unknown method, bad alpha grid, ...)."""


class DataError(EctsBenchError):
    """Malformed or unusable input data."""


class SplitError(DataError):
    """A stratified split cannot satisfy its per-class guarantees."""


class NumericError(EctsBenchError):
    """A numeric procedure diverged or a linear system could not be solved."""
