"""
CSV dataset loading in the canonical repository schema.

The canonical schema uses one column per RepositoryRecord field with ISO-8601
timestamps. A JSON column mapping adapts other headers (for example the
published analysis dataset) to it. Rows that fail to parse are reported with
their row number and reason; they are never dropped silently.

Documentation:
- pandas.read_csv: https://pandas.pydata.org/docs/reference/api/pandas.read_csv.html
- Pydantic: https://docs.pydantic.dev/

Sample Input:
  records, report = load_dataset(Path("data/repos.csv"), load_mapping(Path("mapping.json")))

Expected Output:
  ([RepositoryRecord(owner='psf', name='requests', ...), ...],
   ParseReport(rows_read=10, rows_rejected=1, rejections=[RowRejection(row=4, reason=...)]))
"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field, ValidationError

from engagement_analytics.core_model import RepositoryRecord
from engagement_analytics.errors import EmptyFile, MissingColumn, ParseFailure

REQUIRED_FIELDS: List[str] = [
    "owner", "name", "created_at", "last_commit",
    "commits", "contributors", "watchers", "stargazers", "forks",
    "total_issues", "open_issues", "total_pull_requests", "open_pull_requests",
    "merged_pull_requests", "resolved_issues",
    "issue_comments", "pr_comments", "branches", "releases",
]
OPTIONAL_FIELDS: List[str] = ["is_fork", "license_id", "last_release"]
CANONICAL_FIELDS: List[str] = REQUIRED_FIELDS[:4] + OPTIONAL_FIELDS[:2] + REQUIRED_FIELDS[4:] + ["last_release"]
TIMESTAMP_FIELDS = {"created_at", "last_commit", "last_release"}


class ColumnMapping(BaseModel):
    """Maps canonical field names to source CSV headers."""

    columns: Dict[str, str] = Field(
        default_factory=dict,
        description="Canonical field name -> header in the source file. Unmapped fields use their own name.",
    )
    full_name: Optional[str] = Field(
        None,
        description="Header holding 'owner/name'; when set, owner and name are split from it.",
    )

    def source(self, field: str) -> str:
        return self.columns.get(field, field)


class RowRejection(BaseModel):
    row: int = Field(..., description="1-based data row number (header excluded).")
    reason: str


class ParseReport(BaseModel):
    rows_read: int = 0
    rows_rejected: int = 0
    rejections: List[RowRejection] = Field(default_factory=list)


def load_mapping(path: Optional[Path]) -> ColumnMapping:
    """Load a column mapping from JSON; the identity mapping when ``path`` is None."""
    if path is None:
        return ColumnMapping()
    with open(path, "r", encoding="utf-8") as f:
        return ColumnMapping.model_validate(json.load(f))


def _resolve_columns(header: List[str], mapping: ColumnMapping) -> Dict[str, str]:
    resolved: Dict[str, str] = {}
    missing: List[str] = []
    for field in REQUIRED_FIELDS + OPTIONAL_FIELDS:
        if mapping.full_name and field in ("owner", "name"):
            continue
        column = mapping.source(field)
        if column in header:
            resolved[field] = column
        elif field in REQUIRED_FIELDS:
            missing.append(f"{field} (expected column '{column}')")
    if mapping.full_name and mapping.full_name not in header:
        missing.append(f"owner/name (expected column '{mapping.full_name}')")
    if missing:
        raise MissingColumn(f"Dataset is missing required columns: {', '.join(missing)}")
    return resolved


def _parse_row(row: Dict[str, str], columns: Dict[str, str], mapping: ColumnMapping) -> RepositoryRecord:
    values: Dict[str, object] = {}
    if mapping.full_name:
        owner, sep, name = row[mapping.full_name].strip().partition("/")
        if not sep or not owner or not name:
            raise ValueError(f"'{row[mapping.full_name]}' is not of the form owner/name")
        values["owner"], values["name"] = owner, name

    for field, column in columns.items():
        raw = row[column].strip()
        if field in TIMESTAMP_FIELDS:
            if raw == "":
                if field == "last_release":
                    values[field] = None
                    continue
                raise ValueError(f"{field} is empty")
            try:
                stamp = pd.Timestamp(raw)
            except ValueError as e:
                raise ValueError(f"{field} '{raw}' is not a timestamp") from e
            if pd.isna(stamp):
                raise ValueError(f"{field} '{raw}' is not a timestamp")
            values[field] = stamp.to_pydatetime()
        elif field == "license_id":
            values[field] = raw
        elif field == "is_fork":
            values[field] = raw or "false"
        else:
            values[field] = raw
    return RepositoryRecord.model_validate(values)


def _describe(error: ValueError) -> str:
    # pydantic's ValidationError is a ValueError subclass
    if isinstance(error, ValidationError):
        return "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'row'}: {err['msg']}" for err in error.errors()
        )
    return str(error)


def load_dataset(
    path: Path,
    mapping: Optional[ColumnMapping] = None,
    strict: bool = False,
) -> Tuple[List[RepositoryRecord], ParseReport]:
    """
    Load repository records from a CSV file.

    Args:
        path: UTF-8, comma-separated file with a header row
        mapping: Column mapping; identity when omitted
        strict: Raise ParseFailure on the first bad row instead of reporting it

    Returns:
        Parsed records and the parse report

    Raises:
        EmptyFile: file has no header row
        MissingColumn: a required column cannot be resolved
        ParseFailure: only when strict is set
    """
    mapping = mapping or ColumnMapping()
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError as e:
        raise EmptyFile(f"{path} has no header row") from e

    columns = _resolve_columns(list(frame.columns), mapping)
    records: List[RepositoryRecord] = []
    report = ParseReport(rows_read=len(frame))

    for index, row in enumerate(frame.to_dict(orient="records"), start=1):
        try:
            records.append(_parse_row(row, columns, mapping))
        except ValueError as e:
            reason = _describe(e)
            if strict:
                raise ParseFailure(f"Row {index}: {reason}", row_index=index) from e
            logger.warning(f"Rejected row {index} of {path}: {reason}")
            report.rejections.append(RowRejection(row=index, reason=reason))

    report.rows_rejected = len(report.rejections)
    logger.info(f"Loaded {len(records)} records from {path} ({report.rows_rejected} rejected)")
    return records, report


def write_dataset(records: List[RepositoryRecord], path: Path) -> None:
    """Write records in the canonical schema."""
    rows = []
    for record in records:
        data = record.model_dump()
        for field in TIMESTAMP_FIELDS:
            stamp = data[field]
            data[field] = "" if stamp is None else stamp.isoformat().replace("+00:00", "Z")
        rows.append(data)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=CANONICAL_FIELDS).to_csv(path, index=False)
    logger.info(f"Wrote {len(rows)} records to {path}")
