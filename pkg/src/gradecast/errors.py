"""Exception hierarchy shared across the package.

Every error raised by gradecast derives from GradecastError so callers
(CLI, service) can map failures to exit codes / HTTP statuses in one place.
"""


class GradecastError(Exception):
    """Base class for all gradecast errors."""


class InvalidGrade(GradecastError):
    """A grade token or value outside the recognized scale."""


class OutOfRange(GradecastError):
    """A numeric argument outside its documented domain."""


class OffGrid(GradecastError):
    """A value expected on the distinct letter-grade grid is not on it."""


class ParseError(GradecastError):
    """Malformed input file; carries a line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateRecord(GradecastError):
    """More than one grade record for the same (student, course, term)."""


class InvalidPriorSet(GradecastError):
    """Prior-course list violates its constraints (empty, contains target)."""


class InsufficientHistory(GradecastError):
    """Temporal split leaves no training data before the requested term."""


class ShapeError(GradecastError):
    """Network parameter / input shapes do not line up."""


class EmptySequence(GradecastError):
    """A sequence model was given a zero-length term sequence."""


class CacheMismatch(GradecastError):
    """Backward pass given a cache from a different model or input."""


class NonFiniteGradient(GradecastError):
    """A gradient contained NaN/Inf; the optimizer step was aborted."""


class MissingFeatures(GradecastError):
    """A feature-based model was requested without content features."""


class EncodingMismatch(GradecastError):
    """Example's prior-course set differs from the model's index map."""


class UnsupportedFamily(GradecastError):
    """Operation not defined for this model family (e.g. MC dropout on ridge)."""


class InvalidSpec(GradecastError):
    """Synthetic-generator spec violates its invariants (e.g. cyclic DAG)."""
