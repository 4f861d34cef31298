"""
Exception hierarchy for ingest, solver and benchmark failures.
"""
from typing import Optional


class WmdError(Exception):
    """Base class for all errors raised by this package."""


class InputError(WmdError):
    """Input data violates a format or content contract."""


class EmptyDocument(InputError):
    """A document or query has no (in-vocabulary) entries."""

    def __init__(self, doc: Optional[int] = None):
        self.doc = doc
        if doc is None:
            super().__init__("Document has no in-vocabulary entries")
        else:
            super().__init__(f"Document {doc} has no in-vocabulary entries")


class IndexOutOfRange(InputError):
    """A document or word index falls outside its declared range."""

    def __init__(self, kind: str, index: int, bound: int):
        self.kind = kind
        self.index = index
        self.bound = bound
        super().__init__(f"{kind} index {index} out of range [0, {bound})")


class FormatError(InputError):
    """Malformed embeddings file."""

    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class DuplicateToken(InputError):
    """The same token appears twice in an embeddings file."""

    def __init__(self, token: str):
        self.token = token
        super().__init__(f"Duplicate token {token!r}")


class DimensionMismatch(InputError):
    """Vocabulary sizes or matrix shapes do not agree."""


class ConfigError(WmdError, ValueError):
    """Invalid solver or run configuration."""


class SolverError(WmdError):
    """Failure inside the Sinkhorn pipeline."""


class NumericalBreakdown(SolverError):
    """An SDDMM dot product was zero or non-finite."""

    def __init__(self, entry: int):
        self.entry = entry
        super().__init__(f"Zero or non-finite dot product at nonzero entry {entry}")


class LambdaTooLarge(SolverError):
    """exp(-lambda * M) underflowed for an entire row of K."""

    def __init__(self, lam: float, row: int):
        self.lam = lam
        self.row = row
        super().__init__(
            f"K row {row} underflows below 1e-300 with lambda={lam}; use a smaller lambda"
        )


class DeterminismViolation(SolverError):
    """Results differ across worker counts."""


class VerificationFailure(SolverError):
    """Sparse and dense results deviate beyond the allowed tolerance."""
