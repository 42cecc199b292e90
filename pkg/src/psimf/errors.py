"""Exception types shared across the library."""


class PsimfError(Exception):
    """Base class for all library errors."""


class FactorizationFailure(PsimfError):
    """Covariance matrix could not be repaired to PSD within the clipping policy."""


class OrderTooLarge(PsimfError):
    """Hermite order beyond the overflow guard."""


class SingularSystem(PsimfError):
    """Ridge system is numerically singular (lambda=0 with rank-deficient Gram)."""


class SingularGram(PsimfError):
    """Population Gram matrix of the basis is numerically singular."""


class DegenerateCovariance(PsimfError):
    """All slices identical: sample covariance is zero and whitening is impossible."""


class NotSymmetric(PsimfError):
    """Matrix expected to be symmetric is not, beyond tolerance."""


class DimensionMismatch(PsimfError):
    """Inputs have inconsistent shapes."""


class PartitionMismatch(PsimfError):
    """Supplied partition is not the clusterer's output on the given data."""


class EmptyTruncation(PsimfError):
    """Self-normalized importance-sampling denominator fell below the guard."""


class ParseError(PsimfError):
    """Malformed row in an input file."""

    def __init__(self, row, message):
        super().__init__(f"row {row}: {message}")
        self.row = row


class TimeOutOfRange(PsimfError):
    """Observation time outside [0, 1] with normalization disabled."""


class EmptyRecord(PsimfError):
    """A declared (subject, feature) pair has no observations."""
