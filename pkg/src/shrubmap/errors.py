"""Exception hierarchy shared across the toolkit.

Exit-code mapping used by the CLI: usage problems -> 1, data problems
(bad files, misaligned grids, impossible requests) -> 2, numeric
failures (divergence, undefined statistics) -> 3.
"""


class ShrubmapError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 2


class UsageError(ShrubmapError):
    """Bad parameters, unknown config keys, invalid flag combinations."""

    exit_code = 1


class DataError(ShrubmapError):
    """Malformed or inconsistent input data."""

    exit_code = 2


class FormatError(DataError):
    """A binary container failed magic/header/length validation."""


class AlignmentError(DataError):
    """Rasters that must share one grid transform do not."""


class DimensionError(DataError):
    """Array shapes incompatible with the requested operation."""


class SamplingError(DataError):
    """A sampling request cannot be satisfied by the available population."""


class NumericError(ShrubmapError):
    """Numeric failure: divergence, undefined statistic, degenerate input."""

    exit_code = 3


class DivergenceError(NumericError):
    """Iterative training produced a non-finite loss."""
