"""
Repository record, active lifespan, per-month normalization and exclusion filters.

A repository's cumulative counts are turned into intensity rates by dividing by
its active lifespan (creation to last commit) expressed in 30.44-day months.
The exclusion filters keep inactive, non-fork, multi-contributor repositories
that have at least one issue and one pull request.

Documentation:
- Pydantic: https://docs.pydantic.dev/
- pandas: https://pandas.pydata.org/docs/

Sample Input:
  lifespan = compute_active_lifespan(datetime(2020, 1, 1), datetime(2020, 1, 16))
  normalize_per_month(700, lifespan)

Expected Output:
  ActiveLifespan(days=15, months=0.49277...)
  1420.53...
"""

from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timedelta, timezone
from typing import Dict, Iterable, List, Optional, Tuple

import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, field_validator, model_validator

from engagement_analytics.errors import InvalidOrder, ZeroLifespan, ZeroTotal

DAYS_PER_MONTH = 30.44
RECENCY_WINDOW_DAYS = 183
MIN_CONTRIBUTORS = 3

# Display labels in the order the adequacy table lists them.
ATTRIBUTE_LABELS: Dict[str, str] = {
    "cpm": "CPM",
    "wt_m": "WT/m",
    "cnt_m": "CNT/m",
    "ti_m": "TI/m",
    "oi_m": "OI/m",
    "tpr_m": "TPR/m",
    "opr_m": "OPR/m",
    "ic_m": "IC/m",
    "prc_m": "PRC/m",
    "prar": "PRAR",
    "irr": "RR",
    "fk_m": "FK/m",
    "str_m": "STR/m",
    "bpm": "BPM",
    "rpm": "RPM",
}
ENGAGEMENT_ATTRIBUTES: List[str] = [
    "CPM", "WT/m", "CNT/m", "TI/m", "OI/m", "TPR/m", "OPR/m",
    "IC/m", "PRC/m", "PRAR", "RR", "FK/m", "STR/m",
]
DYNAMICS_ATTRIBUTES: List[str] = ["CPM", "BPM", "RPM"]

NON_OSI_LICENSES = {"", "none", "noassertion", "other", "unlicensed"}


def _as_utc(value: datetime) -> datetime:
    if value.tzinfo is None:
        return value.replace(tzinfo=timezone.utc)
    return value.astimezone(timezone.utc)


class RepositoryRecord(BaseModel):
    """One repository's raw attributes and timestamps."""

    model_config = ConfigDict(frozen=True)

    owner: str
    name: str
    created_at: datetime
    last_commit: datetime
    is_fork: bool = False
    license_id: str = ""
    commits: NonNegativeInt
    contributors: NonNegativeInt
    watchers: NonNegativeInt
    stargazers: NonNegativeInt
    forks: NonNegativeInt
    total_issues: NonNegativeInt
    open_issues: NonNegativeInt
    total_pull_requests: NonNegativeInt
    open_pull_requests: NonNegativeInt
    merged_pull_requests: NonNegativeInt
    resolved_issues: NonNegativeInt
    issue_comments: NonNegativeInt = 0
    pr_comments: NonNegativeInt = 0
    branches: NonNegativeInt = 0
    releases: NonNegativeInt = 0
    last_release: Optional[datetime] = None

    @field_validator("created_at", "last_commit", "last_release")
    @classmethod
    def _utc(cls, v: Optional[datetime]) -> Optional[datetime]:
        return None if v is None else _as_utc(v)

    @model_validator(mode="after")
    def _check_subtotals(self) -> "RepositoryRecord":
        if self.open_issues > self.total_issues:
            raise ValueError("open_issues exceeds total_issues")
        if self.resolved_issues > self.total_issues:
            raise ValueError("resolved_issues exceeds total_issues")
        if self.open_pull_requests > self.total_pull_requests:
            raise ValueError("open_pull_requests exceeds total_pull_requests")
        if self.merged_pull_requests > self.total_pull_requests:
            raise ValueError("merged_pull_requests exceeds total_pull_requests")
        return self

    @property
    def full_name(self) -> str:
        return f"{self.owner}/{self.name}"

    @property
    def lifespan(self) -> "ActiveLifespan":
        return compute_active_lifespan(self.created_at, self.last_commit)


class ActiveLifespan(BaseModel):
    """Whole calendar days between creation and last commit, and the same in months."""

    model_config = ConfigDict(frozen=True)

    days: NonNegativeInt
    months: float = Field(..., ge=0.0)

    @classmethod
    def from_days(cls, days: int) -> "ActiveLifespan":
        return cls(days=days, months=days / DAYS_PER_MONTH)


class MetricVector(BaseModel):
    """Per-month rates plus the two acceptance/resolution ratios for one repository."""

    model_config = ConfigDict(frozen=True)

    cpm: float = Field(..., ge=0.0)
    wt_m: float = Field(..., ge=0.0)
    cnt_m: float = Field(..., ge=0.0)
    ti_m: float = Field(..., ge=0.0)
    oi_m: float = Field(..., ge=0.0)
    tpr_m: float = Field(..., ge=0.0)
    opr_m: float = Field(..., ge=0.0)
    ic_m: float = Field(..., ge=0.0)
    prc_m: float = Field(..., ge=0.0)
    fk_m: float = Field(..., ge=0.0)
    str_m: float = Field(..., ge=0.0)
    bpm: float = Field(..., ge=0.0)
    rpm: float = Field(..., ge=0.0)
    prar: float = Field(..., ge=0.0, le=1.0)
    irr: float = Field(..., ge=0.0, le=1.0)

    def labelled(self) -> Dict[str, float]:
        """Values keyed by display label (CPM, WT/m, ..., RR)."""
        return {ATTRIBUTE_LABELS[key]: value for key, value in self.model_dump().items()}


class FilterReport(BaseModel):
    """Counts behind an exclusion pass; criteria may overlap."""

    input_count: NonNegativeInt
    per_criterion_counts: Dict[str, NonNegativeInt]
    retained_count: NonNegativeInt
    reference_date: datetime

    @property
    def excluded_count(self) -> int:
        return self.input_count - self.retained_count


def compute_active_lifespan(created_at: datetime, last_commit: datetime) -> ActiveLifespan:
    """
    Compute the active lifespan between two UTC instants.

    Partial days are truncated.

    Raises:
        InvalidOrder: last_commit precedes created_at
        ZeroLifespan: both instants fall within the same 24 hours
    """
    delta = _as_utc(last_commit) - _as_utc(created_at)
    if delta < timedelta(0):
        raise InvalidOrder(f"last_commit {last_commit} precedes created_at {created_at}")
    if delta.days == 0:
        raise ZeroLifespan("Active lifespan is zero days")
    return ActiveLifespan.from_days(delta.days)


def normalize_per_month(raw_count: float, lifespan: ActiveLifespan) -> float:
    """Divide a cumulative count by the lifespan in months."""
    if lifespan.days <= 0:
        raise ZeroLifespan("Cannot normalize over a zero-day lifespan")
    if raw_count < 0:
        raise ValueError(f"raw_count must be non-negative, got {raw_count}")
    return raw_count / lifespan.months


def compute_ratio(successes: int, total: int) -> float:
    """Share of successes in total; used for PRAR and IRR."""
    if total == 0:
        raise ZeroTotal("Ratio denominator is zero")
    if successes < 0 or successes > total:
        raise ValueError(f"successes must lie in [0, {total}], got {successes}")
    return successes / total


def compute_metric_vector(record: RepositoryRecord) -> MetricVector:
    """Build the per-month metric vector for a retained record."""
    lifespan = record.lifespan

    def rate(count: int) -> float:
        return normalize_per_month(count, lifespan)

    return MetricVector(
        cpm=rate(record.commits),
        wt_m=rate(record.watchers),
        cnt_m=rate(record.contributors),
        ti_m=rate(record.total_issues),
        oi_m=rate(record.open_issues),
        tpr_m=rate(record.total_pull_requests),
        opr_m=rate(record.open_pull_requests),
        ic_m=rate(record.issue_comments),
        prc_m=rate(record.pr_comments),
        fk_m=rate(record.forks),
        str_m=rate(record.stargazers),
        bpm=rate(record.branches),
        rpm=rate(record.releases),
        prar=compute_ratio(record.merged_pull_requests, record.total_pull_requests),
        irr=compute_ratio(record.resolved_issues, record.total_issues),
    )


def metric_frame(records: List[RepositoryRecord], workers: int = 4) -> pd.DataFrame:
    """
    Tabulate metric vectors for many records.

    Rows keep the input order regardless of ``workers``. Columns are the display
    labels plus ``lifespan_days``; the index is ``owner/name``.
    """
    def row(record: RepositoryRecord) -> Dict[str, float]:
        values: Dict[str, float] = compute_metric_vector(record).labelled()
        values["lifespan_days"] = record.lifespan.days
        return values

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        rows = list(pool.map(row, records, chunksize=256))

    columns = list(ATTRIBUTE_LABELS.values()) + ["lifespan_days"]
    frame = pd.DataFrame(rows, columns=columns, index=[r.full_name for r in records])
    frame.index.name = "repository"
    return frame


def _criteria(
    record: RepositoryRecord,
    reference_date: datetime,
    require_license: bool,
) -> Iterable[str]:
    if reference_date - record.last_commit < timedelta(days=RECENCY_WINDOW_DAYS):
        yield "active"
    if record.is_fork:
        yield "fork"
    if record.contributors < MIN_CONTRIBUTORS:
        yield "few_contributors"
    if record.total_issues == 0:
        yield "no_issues"
    if record.total_pull_requests == 0:
        yield "no_pull_requests"
    if require_license and record.license_id.strip().lower() in NON_OSI_LICENSES:
        yield "no_license"
    if (record.last_commit - record.created_at).days <= 0:
        yield "zero_lifespan"


CRITERIA = (
    "active", "fork", "few_contributors", "no_issues",
    "no_pull_requests", "no_license", "zero_lifespan",
)


def apply_exclusion_filters(
    records: List[RepositoryRecord],
    reference_date: datetime,
    require_license: bool = False,
) -> Tuple[List[RepositoryRecord], FilterReport]:
    """
    Drop records matching any exclusion criterion.

    Args:
        records: Parsed records
        reference_date: "Now" for the six-month (183-day) recency check
        require_license: Also exclude records without an OSI license identifier

    Returns:
        Retained records in input order and the per-criterion report
    """
    reference_date = _as_utc(reference_date)
    counts = {name: 0 for name in CRITERIA}
    retained: List[RepositoryRecord] = []

    for record in records:
        matched = list(_criteria(record, reference_date, require_license))
        for name in matched:
            counts[name] += 1
        if matched:
            logger.debug(f"Excluded {record.full_name}: {', '.join(matched)}")
        else:
            retained.append(record)

    report = FilterReport(
        input_count=len(records),
        per_criterion_counts=counts,
        retained_count=len(retained),
        reference_date=reference_date,
    )
    logger.info(
        f"Exclusion filters kept {report.retained_count} of {report.input_count} repositories"
    )
    return retained, report


if __name__ == "__main__":
    import sys

    all_validation_failures = []
    total_tests = 0

    # Test 1: fifteen days is 0.4928 months
    total_tests += 1
    try:
        lifespan = compute_active_lifespan(datetime(2020, 1, 1), datetime(2020, 1, 16))
        assert lifespan.days == 15
        assert abs(normalize_per_month(700, lifespan) - 700 * DAYS_PER_MONTH / 15) < 1e-9
    except Exception as e:
        all_validation_failures.append(f"Lifespan test failed: {str(e)}")

    # Test 2: same-day lifespans are rejected
    total_tests += 1
    try:
        compute_active_lifespan(datetime(2020, 1, 1), datetime(2020, 1, 1, 23))
        all_validation_failures.append("Zero lifespan test failed: no error raised")
    except ZeroLifespan:
        pass

    # Test 3: acceptance rate
    total_tests += 1
    try:
        assert compute_ratio(3, 4) == 0.75
    except Exception as e:
        all_validation_failures.append(f"Ratio test failed: {str(e)}")

    if all_validation_failures:
        print(f"❌ VALIDATION FAILED - {len(all_validation_failures)} of {total_tests} tests failed:")
        for failure in all_validation_failures:
            print(f"  - {failure}")
        sys.exit(1)
    else:
        print(f"✅ VALIDATION PASSED - All {total_tests} tests produced expected results")
