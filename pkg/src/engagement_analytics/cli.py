"""
Command-line interface for the engagement analytics pipeline.

Each analysis command runs the stages it needs (plus their dependencies) and
emits the partial report; ``run`` executes everything. Exit codes: 0 success,
1 usage or configuration error, 2 data error, 3 stage failure.

Documentation:
- Typer: https://typer.tiangolo.com/

Sample Input:
  $ engagement-analytics run --dataset data/repos.csv --seed 7 --out out --format csv

Expected Output:
  Report written to out (27 files)
"""

import asyncio
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import click
import typer
from loguru import logger
from pydantic import ValidationError

from engagement_analytics import logger as log_setup
from engagement_analytics.config import AnalysisConfig, load_config
from engagement_analytics.dataset import write_dataset
from engagement_analytics.efa import factor_scores, load_model, save_model
from engagement_analytics.errors import DataError, IoFailure, StageError
from engagement_analytics.github_client import (
    ApiSession,
    RecordingTransport,
    ReplayTransport,
    ResolutionPolicy,
    fetch_many,
)
from engagement_analytics.pipeline import AnalysisReport, run_pipeline
from engagement_analytics.report import emit_report, load_report

app = typer.Typer(help="Community-engagement analytics for open-source repositories.")

USAGE_EXIT = 1
DATA_EXIT = 2
STAGE_EXIT = 3


def _config(
    config_path: Optional[Path],
    seed: Optional[int],
    dataset: Optional[Path],
    log_level: Optional[str],
    **overrides: Any,
) -> AnalysisConfig:
    """Merge the config file with CLI flags and set up logging from the result."""
    try:
        config = load_config(config_path, {"seed": seed, "dataset": dataset, "log_level": log_level, **overrides})
    except (OSError, ValueError, ValidationError) as e:
        typer.echo(f"Invalid configuration: {e}", err=True)
        raise typer.Exit(code=USAGE_EXIT)
    log_setup.configure({"log_level": config.log_level, "log_file": config.log_file})
    return config


def _execute(config: AnalysisConfig, targets: Optional[List[str]], out: Path, fmt: str) -> AnalysisReport:
    """Run the requested stages and emit the report, mapping failures to exit codes."""
    if fmt not in ("json", "csv"):
        typer.echo(f"Unknown format {fmt!r}; use json or csv", err=True)
        raise typer.Exit(code=USAGE_EXIT)
    try:
        report = run_pipeline(config, targets=targets)
        written = emit_report(report, out, fmt)  # type: ignore[arg-type]
    except StageError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(code=STAGE_EXIT)
    except (DataError, IoFailure) as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(code=DATA_EXIT)

    for stage, note in report.notes.items():
        typer.echo(f"Note [{stage}]: {note}", err=True)
    typer.echo(f"Report written to {out} ({len(written)} files)")
    return report


ConfigOption = typer.Option(None, "--config", help="JSON analysis config")
SeedOption = typer.Option(None, "--seed", help="Root seed for every randomized step")
DatasetOption = typer.Option(None, "--dataset", help="Dataset CSV")
OutOption = typer.Option(Path("out"), "--out", help="Output directory")
FormatOption = typer.Option("json", "--format", help="Report format: json or csv")
LogLevelOption = typer.Option(None, "--log-level", help="Logging level (DEBUG, INFO, WARNING, ERROR)")


@app.command()
def ingest(
    repo_list: Path = typer.Argument(..., help="File with one owner/name per line"),
    out: Path = typer.Option(Path("data/repos.csv"), "--out", help="Dataset CSV to write"),
    record: Optional[Path] = typer.Option(None, help="Record every API response into this cassette directory"),
    replay: Optional[Path] = typer.Option(None, help="Answer requests from this cassette directory"),
    max_concurrent_requests: int = typer.Option(4, min=1, help="In-flight request cap"),
    pull_requests: str = typer.Option("merged", help="Accepted-PR rule: merged or closed"),
    issues: str = typer.Option("closed", help="Resolved-issue rule: closed or completed"),
    log_level: str = typer.Option("INFO", "--log-level", help="Logging level"),
) -> None:
    """Fetch repositories from the GitHub REST API into a dataset CSV."""
    log_setup.configure({"log_level": log_level})
    if record and replay:
        typer.echo("--record and --replay are mutually exclusive", err=True)
        raise typer.Exit(code=USAGE_EXIT)
    try:
        policy = ResolutionPolicy(pull_requests=pull_requests, issues=issues)  # type: ignore[arg-type]
        lines = repo_list.read_text(encoding="utf-8").splitlines()
    except ValidationError as e:
        typer.echo(f"Invalid resolution policy: {e}", err=True)
        raise typer.Exit(code=USAGE_EXIT)
    except OSError as e:
        typer.echo(f"Cannot read {repo_list}: {e}", err=True)
        raise typer.Exit(code=DATA_EXIT)

    repositories: List[Tuple[str, str]] = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        owner, _, name = line.partition("/")
        if not owner or not name:
            typer.echo(f"Malformed repository {line!r}; expected owner/name", err=True)
            raise typer.Exit(code=DATA_EXIT)
        repositories.append((owner, name))

    token = os.environ.get("GITHUB_TOKEN")
    if not token and not replay:
        logger.warning("GITHUB_TOKEN is not set; unauthenticated requests have a budget of 60 per hour")
    transport = ReplayTransport(replay) if replay else RecordingTransport(record) if record else None

    async def fetch() -> Tuple[List[Any], Dict[str, str]]:
        async with ApiSession(token, max_concurrent_requests, transport=transport) as session:
            return await fetch_many(session, repositories, policy)

    records, failures = asyncio.run(fetch())
    for repository, reason in failures.items():
        typer.echo(f"Skipped {repository}: {reason}", err=True)
    if not records:
        typer.echo("No repository could be fetched", err=True)
        raise typer.Exit(code=DATA_EXIT)
    try:
        write_dataset(records, out)
    except OSError as e:
        typer.echo(f"Cannot write {out}: {e}", err=True)
        raise typer.Exit(code=DATA_EXIT)
    typer.echo(f"Wrote {len(records)} repositories to {out}")


@app.command("filter")
def filter_command(
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    dataset: Optional[Path] = DatasetOption,
    out: Path = OutOption,
    fmt: str = FormatOption,
    log_level: Optional[str] = LogLevelOption,
) -> None:
    """Apply the exclusion filters and report per-criterion counts."""
    config = _config(config_path, seed, dataset, log_level)
    _execute(config, ["filter"], out, fmt)


@app.command()
def metrics(
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    dataset: Optional[Path] = DatasetOption,
    out: Path = OutOption,
    fmt: str = FormatOption,
    log_level: Optional[str] = LogLevelOption,
) -> None:
    """Compute per-month metrics and the descriptive tables; also writes metrics.csv."""
    config = _config(config_path, seed, dataset, log_level)
    report = _execute(config, ["descriptive"], out, fmt)
    try:
        report.metric_table.to_csv(out / "metrics.csv", lineterminator="\n")
    except OSError as e:
        typer.echo(f"Cannot write metrics table: {e}", err=True)
        raise typer.Exit(code=DATA_EXIT)


@app.command()
def distfit(
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    dataset: Optional[Path] = DatasetOption,
    out: Path = OutOption,
    fmt: str = FormatOption,
    log_level: Optional[str] = LogLevelOption,
) -> None:
    """Fit lognormal, exponential and Pareto distributions to every attribute."""
    config = _config(config_path, seed, dataset, log_level)
    _execute(config, ["distfit"], out, fmt)


@app.command()
def efa(
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    dataset: Optional[Path] = DatasetOption,
    out: Path = OutOption,
    fmt: str = FormatOption,
    log_level: Optional[str] = LogLevelOption,
    factor_count: Optional[int] = typer.Option(None, help="Override the parallel-analysis factor count"),
    msa_threshold: Optional[float] = typer.Option(None, help="Minimum per-attribute MSA"),
    vif_threshold: Optional[float] = typer.Option(None, help="Maximum VIF"),
    split_ratio: Optional[float] = typer.Option(None, help="Cross-validation training share"),
) -> None:
    """Select attributes, fit the factor model and cross-validate it; saves factor_model.json."""
    config = _config(
        config_path, seed, dataset, log_level,
        factor_count=factor_count, msa_threshold=msa_threshold,
        vif_threshold=vif_threshold, split_ratio=split_ratio,
    )
    report = _execute(config, ["efa", "cross_validation"], out, fmt)
    if report.factor_model is not None:
        try:
            save_model(report.factor_model, out / "factor_model.json")
        except OSError as e:
            typer.echo(f"Cannot save factor model: {e}", err=True)
            raise typer.Exit(code=DATA_EXIT)


@app.command()
def score(
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    dataset: Optional[Path] = DatasetOption,
    out: Path = OutOption,
    model: Path = typer.Option(..., help="factor_model.json written by the efa command"),
    log_level: Optional[str] = LogLevelOption,
) -> None:
    """Score a dataset with a saved factor model; writes scores.csv."""
    config = _config(config_path, seed, dataset, log_level)
    try:
        factor_model = load_model(model)
        metric_table = run_pipeline(config, targets=["metrics"]).metric_table
        scores = factor_scores(metric_table, factor_model).to_frame()
        out.mkdir(parents=True, exist_ok=True)
        scores.to_csv(out / "scores.csv", lineterminator="\n")
    except StageError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(code=STAGE_EXIT)
    except (DataError, ValidationError, OSError) as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(code=DATA_EXIT)
    typer.echo(f"Scored {len(scores)} repositories into {out / 'scores.csv'}")


@app.command()
def dynamics(
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    dataset: Optional[Path] = DatasetOption,
    out: Path = OutOption,
    fmt: str = FormatOption,
    log_level: Optional[str] = LogLevelOption,
    bootstrap_iterations: Optional[int] = typer.Option(None, help="Bootstrap replicates B"),
    bootstrap_mode: Optional[str] = typer.Option(None, help="literal or paired_difference"),
    zero_policy: Optional[str] = typer.Option(None, help="Log zero handling: strict or offset"),
) -> None:
    """Correlations, bootstrap tests and regressions of project dynamics."""
    config = _config(
        config_path, seed, dataset, log_level,
        bootstrap_iterations=bootstrap_iterations, bootstrap_mode=bootstrap_mode, zero_policy=zero_policy,
    )
    _execute(config, ["correlations", "bootstrap", "regression", "age_interaction"], out, fmt)


@app.command()
def lifespan(
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    dataset: Optional[Path] = DatasetOption,
    out: Path = OutOption,
    fmt: str = FormatOption,
    log_level: Optional[str] = LogLevelOption,
    alpha: Optional[float] = typer.Option(None, help="Family-wise significance level"),
    bonferroni_divisor: Optional[int] = typer.Option(None, help="Bonferroni test count"),
) -> None:
    """Lifespan quartiles and pairwise Mann-Whitney / Cliff's delta comparisons."""
    config = _config(
        config_path, seed, dataset, log_level, alpha=alpha, bonferroni_divisor=bonferroni_divisor
    )
    _execute(config, ["lifespan"], out, fmt)


@app.command()
def run(
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    dataset: Optional[Path] = DatasetOption,
    out: Path = OutOption,
    fmt: str = FormatOption,
    log_level: Optional[str] = LogLevelOption,
    skip: Optional[List[str]] = typer.Option(None, "--skip", help="Optional stage to skip (repeatable)"),
) -> None:
    """Run the full pipeline."""
    config = _config(config_path, seed, dataset, log_level, skip_stages=set(skip) if skip else None)
    _execute(config, None, out, fmt)


@app.command()
def report(
    source: Path = typer.Argument(..., help="report.json written by a previous run"),
    out: Path = OutOption,
    fmt: str = FormatOption,
) -> None:
    """Re-emit a saved report in another format."""
    if fmt not in ("json", "csv"):
        typer.echo(f"Unknown format {fmt!r}; use json or csv", err=True)
        raise typer.Exit(code=USAGE_EXIT)
    try:
        written = emit_report(load_report(source), out, fmt)  # type: ignore[arg-type]
    except (IoFailure, ValidationError) as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(code=DATA_EXIT)
    typer.echo(f"Report written to {out} ({len(written)} files)")


def main() -> None:
    """Console entry point; click reports usage errors with 2, this maps them to 1."""
    try:
        # without standalone mode click returns typer.Exit codes instead of exiting
        code = app(standalone_mode=False)
    except click.exceptions.UsageError as e:
        e.show()
        sys.exit(USAGE_EXIT)
    except click.exceptions.Abort:
        sys.exit(USAGE_EXIT)
    sys.exit(code if isinstance(code, int) else 0)


if __name__ == "__main__":
    main()
