"""
Exception hierarchy for engagement analytics.

Every failure the package raises derives from EngagementAnalyticsError. The CLI
maps DataError to exit code 2 and StageError to exit code 3.

Sample Input:
  raise ZeroLifespan("created_at and last_commit fall on the same day")

Expected Output:
  engagement_analytics.errors.ZeroLifespan: created_at and last_commit fall on the same day
"""

from typing import Optional


class EngagementAnalyticsError(Exception):
    """Base class for all package errors."""
    pass


class DataError(EngagementAnalyticsError):
    """Input data violates a precondition."""
    pass


class StatisticsError(DataError):
    """A statistical routine cannot be evaluated on the given sample."""
    pass


# core-model

class ZeroLifespan(DataError):
    """Active lifespan is zero days."""
    pass


class InvalidOrder(DataError):
    """last_commit precedes created_at."""
    pass


class ZeroTotal(DataError):
    """Ratio denominator is zero."""
    pass


# ingest

class MissingColumn(DataError):
    """A required dataset column cannot be resolved through the mapping."""
    pass


class ParseFailure(DataError):
    """A dataset row could not be parsed."""

    def __init__(self, message: str, row_index: Optional[int] = None):
        super().__init__(message)
        self.row_index = row_index


class EmptyFile(DataError):
    """The dataset file has no header row."""
    pass


class IncompleteRecord(DataError):
    """A repository payload lacks a field the record requires."""
    pass


class GitHubError(EngagementAnalyticsError):
    """Base class for GitHub REST failures."""
    pass


class NotFound(GitHubError):
    """Repository does not exist or is not visible (404)."""
    pass


class RateLimited(GitHubError):
    """Request budget exhausted until reset_at."""

    def __init__(self, message: str, reset_at: Optional[float] = None):
        super().__init__(message)
        self.reset_at = reset_at


class Forbidden(GitHubError):
    """403 response that is not a rate-limit response."""
    pass


class NetworkFailure(GitHubError):
    """Transport-level failure after retries."""
    pass


# statistics

class EmptySample(StatisticsError):
    pass


class LengthMismatch(StatisticsError):
    pass


class DegenerateInput(StatisticsError):
    """Constant vector or otherwise rank-degenerate input."""
    pass


class InsufficientIterations(StatisticsError):
    pass


class InsufficientData(StatisticsError):
    pass


class DegenerateFit(StatisticsError):
    """Fitted parameters are pathological (zero scale, diverging location, ...)."""
    pass


class ZeroVariance(StatisticsError):
    def __init__(self, column: str):
        super().__init__(f"Column {column!r} has zero variance")
        self.column = column


class TooFewRows(StatisticsError):
    pass


class SingularMatrix(StatisticsError):
    pass


class EverythingRemoved(StatisticsError):
    """Attribute selection left fewer than three attributes."""
    pass


class NonConvergence(StatisticsError):
    pass


class NonPositiveValue(StatisticsError):
    pass


class RankDeficient(StatisticsError):
    pass


class NoReleases(StatisticsError):
    pass


class DegeneratePartition(StatisticsError):
    """Quantile cutpoints are not distinct."""
    pass


class EmptyGroup(StatisticsError):
    pass


# pipeline

class StageError(EngagementAnalyticsError):
    """A pipeline stage failed; carries the stage name and the cause."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"Stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class IoFailure(EngagementAnalyticsError):
    """Report files could not be written."""
    pass
