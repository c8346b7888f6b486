"""
Tests for CSV dataset loading, column mapping and writing.

Documentation:
- pytest: https://docs.pytest.org/
"""

from datetime import datetime, timezone
from pathlib import Path

import pytest
from conftest import FIXTURES, make_records

from engagement_analytics.core_model import apply_exclusion_filters
from engagement_analytics.dataset import (
    CANONICAL_FIELDS,
    ColumnMapping,
    load_dataset,
    load_mapping,
    write_dataset,
)
from engagement_analytics.errors import EmptyFile, MissingColumn, ParseFailure


def test_malformed_row_is_reported_not_dropped():
    records, report = load_dataset(FIXTURES / "repos.csv")
    assert len(records) == 9
    assert report.rows_read == 10
    assert report.rows_rejected == 1
    assert report.rejections[0].row == 6
    assert "last_commit" in report.rejections[0].reason


def test_strict_mode_raises_with_row_index():
    with pytest.raises(ParseFailure) as excinfo:
        load_dataset(FIXTURES / "repos.csv", strict=True)
    assert excinfo.value.row_index == 6


def test_fixture_filter_counts():
    records, _ = load_dataset(FIXTURES / "repos.csv")
    reference = datetime(2023, 7, 1, tzinfo=timezone.utc)
    retained, report = apply_exclusion_filters(records, reference, require_license=True)
    assert [r.full_name for r in retained] == ["acme/rocket", "crane/lift", "echo/bell"]
    assert report.per_criterion_counts == {
        "active": 2,
        "fork": 1,
        "few_contributors": 1,
        "no_issues": 1,
        "no_pull_requests": 0,
        "no_license": 1,
        "zero_lifespan": 1,
    }


def test_empty_last_release_is_none():
    records, _ = load_dataset(FIXTURES / "repos.csv")
    docs = next(r for r in records if r.full_name == "bolt/docs")
    assert docs.last_release is None
    rocket = next(r for r in records if r.full_name == "acme/rocket")
    assert rocket.last_release == datetime(2022, 9, 30, tzinfo=timezone.utc)


def test_mapping_adapts_foreign_headers():
    records, report = load_dataset(FIXTURES / "repos_mapped.csv", load_mapping(FIXTURES / "mapping.json"))
    assert report.rows_rejected == 0
    assert [r.full_name for r in records] == ["acme/rocket", "acme/sled"]
    assert records[0].stargazers == 410
    assert records[1].last_release is None


def test_missing_column_is_named():
    with pytest.raises(MissingColumn) as excinfo:
        load_dataset(FIXTURES / "repos_mapped.csv")
    assert "created_at" in str(excinfo.value)


def test_header_only_file_yields_no_records(tmp_path: Path):
    path = tmp_path / "empty.csv"
    path.write_text(",".join(CANONICAL_FIELDS) + "\n", encoding="utf-8")
    records, report = load_dataset(path)
    assert records == []
    assert report.rows_read == 0


def test_blank_file_is_empty(tmp_path: Path):
    path = tmp_path / "blank.csv"
    path.write_text("", encoding="utf-8")
    with pytest.raises(EmptyFile):
        load_dataset(path)


def test_write_then_load_preserves_records(tmp_path: Path):
    records = make_records(n=12, seed=3)
    path = tmp_path / "out" / "repos.csv"
    write_dataset(records, path)
    loaded, report = load_dataset(path, ColumnMapping())
    assert report.rows_rejected == 0
    assert loaded == records
