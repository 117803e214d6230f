"""Exception types shared across modules; the CLI maps them to exit codes."""


class DataError(Exception):
    """Unusable input data: missing files, malformed records, misaligned sets."""


class NumericError(Exception):
    """Numerical failure: non-finite loss, diverging optimization."""
