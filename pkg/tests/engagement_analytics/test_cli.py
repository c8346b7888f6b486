"""
Tests for the command-line interface and its exit codes.

Documentation:
- Typer testing: https://typer.tiangolo.com/tutorial/testing/
"""

import json
import sys
from pathlib import Path

import pandas as pd
import pytest
from conftest import FIXTURES
from typer.testing import CliRunner

from engagement_analytics import logger as log_setup
from engagement_analytics.cli import app, main
from engagement_analytics.config import canonical_json

runner = CliRunner()


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    # the CLI binds a sink to the runner's stderr, which is closed afterwards
    log_setup.configure({})


@pytest.fixture
def config_file(make_config, workdir: Path) -> Path:
    path = workdir / "analysis.json"
    path.write_text(canonical_json(make_config()), encoding="utf-8")
    return path


def test_run_writes_report(config_file: Path, workdir: Path):
    out = workdir / "out"
    result = runner.invoke(app, ["run", "--config", str(config_file), "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "Report written to" in result.output
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report["provenance"]["seed"] == 7


def test_run_with_skipped_stage(config_file: Path, workdir: Path):
    out = workdir / "out"
    result = runner.invoke(
        app, ["run", "--config", str(config_file), "--out", str(out), "--skip", "distfit", "--format", "csv"]
    )
    assert result.exit_code == 0, result.output
    assert "Note [distfit]: skipped by configuration" in result.output
    assert (out / "provenance.json").exists()


def test_missing_dataset_is_a_data_error(workdir: Path):
    result = runner.invoke(app, ["filter", "--out", str(workdir)])
    assert result.exit_code == 2
    result = runner.invoke(app, ["filter", "--dataset", str(workdir / "absent.csv"), "--out", str(workdir)])
    assert result.exit_code == 2


def test_invalid_seed_is_a_usage_error(workdir: Path):
    result = runner.invoke(app, ["run", "--dataset", str(FIXTURES / "repos.csv"), "--seed", "-1"])
    assert result.exit_code == 1
    assert "Invalid configuration" in result.output


def test_unknown_format_is_a_usage_error(config_file: Path, workdir: Path):
    result = runner.invoke(app, ["filter", "--config", str(config_file), "--out", str(workdir), "--format", "xml"])
    assert result.exit_code == 1


def test_everything_filtered_is_a_stage_failure(workdir: Path):
    path = workdir / "old.json"
    path.write_text(json.dumps({"reference_date": "2019-01-01T00:00:00Z"}), encoding="utf-8")
    result = runner.invoke(
        app, ["filter", "--config", str(path), "--dataset", str(FIXTURES / "repos.csv"), "--out", str(workdir)]
    )
    assert result.exit_code == 3


def test_metrics_table_matches_the_filtered_population(config_file: Path, workdir: Path):
    out = workdir / "metrics"
    result = runner.invoke(app, ["metrics", "--config", str(config_file), "--out", str(out)])
    assert result.exit_code == 0, result.output
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    table = pd.read_csv(out / "metrics.csv", index_col=0)
    assert len(table) == report["filter"]["retained_count"] == 160
    assert {"TI/m", "STR/m", "CPM"} <= set(table.columns)


def test_saved_model_scores_the_dataset(config_file: Path, workdir: Path):
    fitted = workdir / "efa"
    assert runner.invoke(app, ["efa", "--config", str(config_file), "--out", str(fitted)]).exit_code == 0
    out = workdir / "scored"
    result = runner.invoke(
        app, ["score", "--config", str(config_file), "--model", str(fitted / "factor_model.json"), "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    assert "Scored 160 repositories" in result.output
    assert len(pd.read_csv(out / "scores.csv")) == 160

def test_report_is_reemitted_as_csv(config_file: Path, workdir: Path):
    first = workdir / "json"
    assert runner.invoke(app, ["lifespan", "--config", str(config_file), "--out", str(first)]).exit_code == 0
    second = workdir / "csv"
    result = runner.invoke(app, ["report", str(first / "report.json"), "--out", str(second), "--format", "csv"])
    assert result.exit_code == 0, result.output
    assert (second / "lifespan_comparisons.csv").exists()


def test_report_of_missing_file(workdir: Path):
    result = runner.invoke(app, ["report", str(workdir / "nothing.json"), "--out", str(workdir)])
    assert result.exit_code == 2


def test_ingest_rejects_malformed_repository_list(workdir: Path):
    repos = workdir / "repos.txt"
    repos.write_text("# seeds\nacme/rocket\nnot-a-repo\n", encoding="utf-8")
    result = runner.invoke(app, ["ingest", str(repos), "--replay", str(workdir), "--out", str(workdir / "r.csv")])
    assert result.exit_code == 2
    assert "not-a-repo" in result.output


def test_main_maps_click_usage_errors_to_one(monkeypatch):
    monkeypatch.setattr(sys, "argv", ["engagement-analytics", "run", "--no-such-flag"])
    with pytest.raises(SystemExit) as excinfo:
        main()
    assert excinfo.value.code == 1
