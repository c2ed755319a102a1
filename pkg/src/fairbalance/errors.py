"""Exception types shared across the package.

Everything caused by bad input data or arguments derives from DataError,
which the command line maps to exit code 1. InternalInvariantError marks a
bug in our own bookkeeping (exit code 3) and should never fire in normal use.
"""


class DataError(Exception):
    """Invalid input data or arguments."""


class ManifestError(DataError):
    pass


class ScoringError(DataError):
    pass


class SamplingError(DataError):
    """Bad budget or a mid-run dead end.

    When a greedy run fails partway through, ``partial_trace`` carries the
    removals completed before the offending step.
    """

    def __init__(self, message, partial_trace=None):
        super().__init__(message)
        self.partial_trace = partial_trace


class MetricsError(DataError):
    pass


class SynthError(DataError):
    pass


class InternalInvariantError(RuntimeError):
    """Internal bookkeeping contradiction, not a user error."""
