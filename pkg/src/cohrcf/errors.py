"""Exception hierarchy shared by every module."""


class CohrcfError(Exception):
    """Base class for all library errors."""


class DataError(CohrcfError, ValueError):
    """Input data is missing, malformed or otherwise unusable."""


class MalformedLine(DataError):
    pass


class OutOfRangeRating(DataError):
    pass


class EmptyMatrix(DataError):
    pass


class InvalidFoldCount(CohrcfError, ValueError):
    pass


class InvalidK(CohrcfError, ValueError):
    pass


class DimensionMismatch(CohrcfError, ValueError):
    pass


class EmptyInput(CohrcfError, ValueError):
    pass


class DegenerateEstimate(CohrcfError, ValueError):
    """Fewer than two Welch segments fit: coherence would be identically 1."""


class NoHiddenRatings(CohrcfError, ValueError):
    pass


class InvariantViolation(CohrcfError, RuntimeError):
    """An internal consistency check failed."""
