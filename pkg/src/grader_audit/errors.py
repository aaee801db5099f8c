"""Exception hierarchy shared across the package."""

from __future__ import annotations


class GraderAuditError(Exception):
    """Base class for all package-specific errors."""


# --- data ingestion ---------------------------------------------------------


class DataError(GraderAuditError):
    """Invalid or inconsistent observation data."""


class MissingColumn(DataError):
    pass


class InvalidValue(DataError):
    """A cell could not be parsed (bad integer, bad enum, ...)."""


class ScoreOutOfRange(DataError):
    pass


class InconsistentGraderType(DataError):
    pass


class SelfComparison(DataError):
    pass


class NegativeTokenCount(DataError):
    pass


class DegenerateLengths(DataError):
    pass


class UnknownLevel(DataError):
    pass


# --- model specification / design -------------------------------------------


class DesignError(GraderAuditError):
    pass


class SingleLevelFactor(DesignError):
    pass


class IndexOutOfRange(DesignError):
    pass


class ShapeMismatch(DesignError):
    pass


class UnknownParameter(DesignError):
    pass


# --- densities ---------------------------------------------------------------


class InvalidScore(GraderAuditError):
    pass


class NonPositiveScale(GraderAuditError):
    pass


class NonFiniteDensity(GraderAuditError):
    """Raised when a log-density evaluation hits a non-finite intermediate."""


# --- sampling ----------------------------------------------------------------


class SamplerError(GraderAuditError):
    pass


class NonFiniteAtInit(SamplerError):
    pass


class AllDivergent(SamplerError):
    pass


class TooFewDraws(GraderAuditError):
    pass


# --- model comparison --------------------------------------------------------


class DatasetMismatch(GraderAuditError):
    pass


# --- analysis ----------------------------------------------------------------


class EmptySamples(GraderAuditError):
    pass


class NoVariation(GraderAuditError):
    pass


class TooFewRatings(GraderAuditError):
    pass


class MissingItemColumn(GraderAuditError):
    pass


class NotOrderedModel(GraderAuditError):
    pass


class TooFewModels(GraderAuditError):
    pass


# --- simulation --------------------------------------------------------------


class InvalidTruthShape(GraderAuditError):
    pass
