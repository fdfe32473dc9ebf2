"""Error types raised by the estimators, the benchmark engine, and ingestion."""

from __future__ import annotations


class MMHetError(Exception):
    """Base class for every error this package raises on purpose."""


class NoFiniteEvaluation(MMHetError):
    """The profile equation was non-finite at every grid point."""


class DegenerateDesign(MMHetError):
    """The design cannot identify the parameters (or a plug-in denominator died)."""


class SingularInformation(MMHetError):
    """Information matrix condition number exceeded the invertibility cutoff."""


class NonconvergedFit(MMHetError):
    """Single-curve fit did not converge.

    Carries the best available partial result and the solver diagnostics so
    callers can still report what happened.
    """

    def __init__(self, message: str, result=None, diagnostics=None):
        super().__init__(message)
        self.result = result
        self.diagnostics = diagnostics


class AllCandidatesFailed(MMHetError):
    """Every candidate variance model failed during screening."""


class InsufficientReplication(MMHetError):
    """No cluster has two or more observations, so off-diagonal moments vanish."""


class NonPositiveGamma(MMHetError):
    """Working covariance requested with gamma <= 0."""


class TooManyFailures(MMHetError):
    """More than 20 percent of bootstrap refits failed."""


class InsufficientSuccesses(MMHetError):
    """Fewer than two successful replications reached the metric stage."""


class IngestError(MMHetError):
    """Base class for CSV ingestion problems."""


class MissingColumn(IngestError):
    """A required column is absent from the header."""


class ParseError(IngestError):
    """A cell failed to parse as a number; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(message)
        self.line = line


class EmptyAfterFiltering(IngestError):
    """All rows were dropped by sentinel/non-finite filtering."""
