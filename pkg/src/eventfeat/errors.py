"""Exception types shared across the package.

Everything derives from EventfeatError so callers can catch package
errors with a single except clause. The CLI additionally distinguishes
ConfigError (exit code 2) from DataError (exit code 3).
"""


class EventfeatError(Exception):
    """Base class for all errors raised by this package."""


class TruncatedRecord(EventfeatError):
    """Event file length is not a whole number of records."""


class CoordinateOutOfRange(EventfeatError):
    """Decoded event coordinate falls outside the sensor geometry."""


class ShapeMismatch(EventfeatError):
    """Array shapes disagree with each other or with the camera model."""


class NonMonotonicTimestamps(EventfeatError):
    """Timestamps were required to be sorted / strictly increasing."""


class TimestampOverflow(EventfeatError):
    """Timestamp does not fit the 23-bit field of the file format."""


class OutOfBounds(EventfeatError):
    """Requested volume does not fit inside the grid."""


class InsufficientData(EventfeatError):
    """Random volume sampling exhausted its retry budget."""


class EmptyInput(EventfeatError):
    """An operation that needs at least one element received none."""


class DimensionMismatch(EventfeatError):
    """Vector or matrix dimensions are inconsistent."""


class NotNormalized(EventfeatError):
    """Dictionary columns are expected to have unit Euclidean norm."""


class SingularGram(EventfeatError):
    """Gram matrix is exactly singular; log-determinant undefined."""


class SingularFactor(EventfeatError):
    """Factor matrix is not positive definite."""


class EmptyLattice(EventfeatError):
    """No extraction site fits the grid with the given block size."""


class DegenerateLabels(EventfeatError):
    """Classifier training needs at least two distinct classes."""


class TooFewExamples(EventfeatError):
    """A class has too few examples for the requested fold count."""


class ConfigError(EventfeatError):
    """Configuration file is malformed or internally inconsistent."""


class DataError(EventfeatError):
    """Dataset directory is missing or malformed."""
