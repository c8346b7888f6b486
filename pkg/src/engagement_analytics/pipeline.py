"""
End-to-end analysis pipeline.

Loading runs first and outside the stage graph; every later step is a stage:
filter -> metrics -> descriptive / distfit / efa -> cross_validation /
correlations -> bootstrap / regression, plus age_interaction and lifespan off
the metric table. Optional stages (distfit, cross_validation, bootstrap,
age_interaction, lifespan) degrade to a report note when they fail; any other
stage failure aborts the run with StageError.

Every randomized step draws its seed from the config seed and the stage name,
so disabling one stage never shifts the random streams of another.

Sample Input:
  config = load_config(overrides={"dataset": Path("repos.csv"), "seed": 7, "factor_count": 2})
  report = run_pipeline(config)

Expected Output:
  AnalysisReport(filter=FilterReport(input_count=..., retained_count=...), ...,
                 stage_status={'filter': 'completed', ..., 'age_interaction': 'failed'},
                 notes={'age_interaction': 'NoReleases: No repository has a release; ...'})
"""

import hashlib
import json
import zlib
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field, PrivateAttr

from engagement_analytics import __version__
from engagement_analytics.config import AnalysisConfig, canonical_json, config_hash
from engagement_analytics.core_model import (
    DYNAMICS_ATTRIBUTES,
    ENGAGEMENT_ATTRIBUTES,
    RECENCY_WINDOW_DAYS,
    FilterReport,
    RepositoryRecord,
    apply_exclusion_filters,
    metric_frame,
)
from engagement_analytics.dataset import ParseReport, load_dataset, load_mapping
from engagement_analytics.distfit import AttributeFits, emit_distribution_plotdata, fit_attributes
from engagement_analytics.efa import (
    CrossValReport,
    FactorModel,
    ParallelAnalysisResult,
    SelectionResult,
    cross_validate,
    factor_labels,
    factor_scores,
    fit_from_frame,
    parallel_analysis,
    select_attributes,
)
from engagement_analytics.errors import DataError, MissingColumn, StatisticsError
from engagement_analytics.lifespan import (
    PairwiseComparisonTable,
    compare_groups,
    partition_by_days,
    quartile_summary,
)
from engagement_analytics.regress import (
    RegressionFit,
    assign_age_groups,
    dynamics_on_metrics_by_age,
    dynamics_on_scores,
    percent_effect,
)
from engagement_analytics.stages import Stage, StageGraph, StageRunner, StageStatus
from engagement_analytics.stats_base import (
    RNG_ALGORITHM,
    BootstrapResult,
    DescriptiveStats,
    assign_quartiles,
    bootstrap_group_difference,
    bootstrap_rho_z,
    descriptive_stats,
    median_split,
    quartile_cutpoints,
    spearman_rho,
)

# Individual engagement metrics used by the age-interaction models and the lifespan tables.
INTERACTION_METRICS: List[str] = ["TI/m", "IC/m", "WT/m", "STR/m"]
LIFESPAN_METRICS: List[str] = INTERACTION_METRICS + DYNAMICS_ATTRIBUTES
SPLIT_SCORE = "AES"

STAGE_ORDER = (
    "filter", "metrics", "descriptive", "distfit", "efa", "cross_validation",
    "correlations", "bootstrap", "regression", "age_interaction", "lifespan",
)
VERSIONED_PACKAGES = ("numpy", "scipy", "pandas", "pydantic", "networkx")


class CorrelationRow(BaseModel):
    group: str = Field(..., description="overall, low or high (median split on the split score).")
    score: str
    dynamic: str
    rho: float
    p_value: float
    n: int


class BootstrapRow(BaseModel):
    score: str
    dynamic: str
    rho_high: float
    rho_low: float
    result: BootstrapResult
    rho_z: Optional[BootstrapResult] = Field(
        None, description="Single-correlation test of the overall rho on every repository."
    )


class PercentEffect(BaseModel):
    response: str
    term: str
    coef: float
    percent: float


class AgeGroupSummary(BaseModel):
    cutpoints: Tuple[float, float, float]
    group_sizes: Dict[str, int]
    excluded_without_release: int


class LifespanSummary(BaseModel):
    cutpoints: Tuple[float, float, float]
    group_sizes: Dict[str, int]
    max_observed: int


class Provenance(BaseModel):
    package_version: str
    library_versions: Dict[str, str]
    config: Dict[str, Any]
    config_hash: str
    seed: int
    rng: str = RNG_ALGORITHM
    stage_seeds: Dict[str, int] = Field(default_factory=dict)
    dataset_sha256: Optional[str] = None
    reference_date: datetime


class AnalysisReport(BaseModel):
    """Everything a run produced, plus per-stage status and notes."""

    parse: Optional[ParseReport] = None
    filter: Optional[FilterReport] = None
    descriptive: Dict[str, DescriptiveStats] = Field(default_factory=dict)
    dynamics_descriptive: Dict[str, DescriptiveStats] = Field(default_factory=dict)
    distribution_fits: List[AttributeFits] = Field(default_factory=list)
    selection: Optional[SelectionResult] = None
    efa_attributes: List[str] = Field(default_factory=list)
    parallel_analysis: Optional[ParallelAnalysisResult] = None
    factor_model: Optional[FactorModel] = None
    factor_labels: List[str] = Field(default_factory=list)
    cross_validation: Optional[CrossValReport] = None
    median_cutpoint: Optional[float] = None
    correlations: List[CorrelationRow] = Field(default_factory=list)
    bootstrap: List[BootstrapRow] = Field(default_factory=list)
    regression_scores: Dict[str, RegressionFit] = Field(default_factory=dict)
    percent_effects: List[PercentEffect] = Field(default_factory=list)
    age_groups: Optional[AgeGroupSummary] = None
    regression_age: Dict[str, RegressionFit] = Field(default_factory=dict)
    lifespan_partition: Optional[LifespanSummary] = None
    lifespan_summary: Dict[str, Dict[str, DescriptiveStats]] = Field(default_factory=dict)
    lifespan_comparisons: Optional[PairwiseComparisonTable] = None
    stage_status: Dict[str, StageStatus] = Field(default_factory=dict)
    notes: Dict[str, str] = Field(default_factory=dict)
    provenance: Provenance

    # Row-level tables; emitted as CSV but kept out of the JSON document.
    _plot_data: Dict[str, pd.DataFrame] = PrivateAttr(default_factory=dict)
    _scores: Optional[pd.DataFrame] = PrivateAttr(default=None)
    _metrics: Optional[pd.DataFrame] = PrivateAttr(default=None)

    @property
    def plot_data(self) -> Dict[str, pd.DataFrame]:
        return self._plot_data

    @property
    def scores(self) -> Optional[pd.DataFrame]:
        return self._scores

    @property
    def metric_table(self) -> Optional[pd.DataFrame]:
        """Per-month metrics of the retained repositories, indexed by repository."""
        return self._metrics


@dataclass
class LoadedDataset:
    records: List[RepositoryRecord]
    parse: Optional[ParseReport] = None
    sha256: Optional[str] = None


@dataclass
class _EfaOutcome:
    selection: Optional[SelectionResult]
    attributes: List[str]
    parallel: ParallelAnalysisResult
    model: FactorModel
    labels: List[str]
    scores: pd.DataFrame
    notes: List[str] = field(default_factory=list)


def stage_seed(root: int, name: str) -> int:
    """Seed for one named randomized step, derived from the config seed."""
    sequence = np.random.SeedSequence([root, zlib.crc32(name.encode("utf-8"))])
    return int(sequence.generate_state(1, np.uint64)[0])


def load_records(config: AnalysisConfig) -> LoadedDataset:
    """
    Parse the configured dataset.

    Raises:
        DataError: no dataset configured, or the file cannot be read or parsed
    """
    if config.dataset is None:
        raise DataError("No dataset configured; pass --dataset or set 'dataset' in the config file")
    try:
        digest = hashlib.sha256(Path(config.dataset).read_bytes()).hexdigest()
        mapping = load_mapping(config.column_mapping)
    except OSError as e:
        raise DataError(f"Cannot read {e.filename}: {e.strerror}") from e
    records, parse = load_dataset(Path(config.dataset), mapping, strict=config.strict_parse)
    return LoadedDataset(records=records, parse=parse, sha256=digest)


def resolve_reference_date(config: AnalysisConfig, records: List[RepositoryRecord]) -> datetime:
    """reference_date, else dataset_snapshot_date, else the day after the recency window closes."""
    if config.reference_date is not None:
        return config.reference_date
    if config.dataset_snapshot_date is not None:
        return config.dataset_snapshot_date
    if not records:
        raise DataError("Cannot derive a reference date from an empty dataset")
    latest = max(r.last_commit for r in records)
    fallback = latest + timedelta(days=RECENCY_WINDOW_DAYS + 1)
    logger.warning(
        f"No reference or snapshot date configured; using {fallback.date()} so the recency check keeps every record"
    )
    return fallback


def _library_versions() -> Dict[str, str]:
    versions = {}
    for package in VERSIONED_PACKAGES:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "unknown"
    return versions


class _Pipeline:
    """Stage bodies over one config and one record set; results flow through the runner."""

    def __init__(self, config: AnalysisConfig, records: List[RepositoryRecord], reference_date: datetime):
        self.config = config
        self.records = records
        self.reference_date = reference_date
        self.seeds: Dict[str, int] = {}

    def seed_for(self, name: str) -> int:
        seed = stage_seed(self.config.seed, name)
        self.seeds[name] = seed
        return seed

    def graph(self) -> StageGraph:
        graph = StageGraph()
        for stage in (
            Stage("filter", self.filter),
            Stage("metrics", self.metrics, ["filter"]),
            Stage("descriptive", self.descriptive, ["metrics"]),
            Stage("distfit", self.distfit, ["metrics"], optional=True),
            Stage("efa", self.efa, ["metrics"]),
            Stage("cross_validation", self.cross_validation, ["efa"], optional=True),
            Stage("correlations", self.correlations, ["efa"]),
            Stage("bootstrap", self.bootstrap, ["correlations"], optional=True),
            Stage("regression", self.regression, ["efa"]),
            Stage("age_interaction", self.age_interaction, ["metrics"], optional=True),
            Stage("lifespan", self.lifespan, ["metrics"], optional=True),
        ):
            graph.add_stage(stage)
        return graph

    def filter(self, results: Dict[str, Any]) -> Tuple[List[RepositoryRecord], FilterReport]:
        retained, report = apply_exclusion_filters(
            self.records, self.reference_date, require_license=self.config.require_license
        )
        if not retained:
            raise DataError("Every repository was excluded by the filters")
        return retained, report

    def metrics(self, results: Dict[str, Any]) -> pd.DataFrame:
        retained, _ = results["filter"]
        return metric_frame(retained, workers=self.config.workers)

    def descriptive(self, results: Dict[str, Any]) -> Tuple[Dict[str, DescriptiveStats], Dict[str, DescriptiveStats]]:
        frame: pd.DataFrame = results["metrics"]
        table = {a: descriptive_stats(frame[a].to_numpy()) for a in ENGAGEMENT_ATTRIBUTES}
        dynamics = {a: descriptive_stats(frame[a].to_numpy()) for a in DYNAMICS_ATTRIBUTES}
        return table, dynamics

    def distfit(self, results: Dict[str, Any]) -> Tuple[List[AttributeFits], Dict[str, pd.DataFrame]]:
        frame: pd.DataFrame = results["metrics"]
        fits = fit_attributes(frame, ENGAGEMENT_ATTRIBUTES, workers=self.config.workers)
        plots: Dict[str, pd.DataFrame] = {}
        for fit in fits:
            for kind in ("lognormal", "exponential"):
                fitted = getattr(fit, kind)
                if fitted is not None:
                    plots[f"{fit.attribute}:{kind}"] = emit_distribution_plotdata(
                        frame[fit.attribute].to_numpy(), fitted
                    )
        return fits, plots

    def efa(self, results: Dict[str, Any]) -> _EfaOutcome:
        frame: pd.DataFrame = results["metrics"][ENGAGEMENT_ATTRIBUTES]
        notes: List[str] = []
        pinned = self.config.efa_attributes
        if pinned:
            missing = [a for a in pinned if a not in frame.columns]
            if missing:
                raise MissingColumn(f"efa_attributes names unknown attributes: {missing}")

        selection: Optional[SelectionResult] = None
        try:
            selection = select_attributes(frame, self.config.msa_threshold, self.config.vif_threshold)
        except StatisticsError as e:
            if not pinned:
                raise
            notes.append(f"attribute selection: {e}")

        attributes = list(pinned) if pinned else list(selection.retained if selection else [])
        if selection is not None and pinned and attributes != selection.retained:
            logger.info(f"Using pinned attributes {attributes}; selection retained {selection.retained}")
            notes.append(f"attributes pinned to {attributes}; selection retained {selection.retained}")
        data = frame[attributes]

        parallel = parallel_analysis(data, self.config.parallel_sims, seed=self.seed_for("parallel_analysis"))
        k = self.config.factor_count or parallel.suggested_factors
        if k < 1:
            logger.warning("Parallel analysis suggested no factors; fitting one")
            notes.append("parallel analysis suggested 0 factors; k set to 1")
            k = 1

        model = fit_from_frame(data, k, seed=self.config.seed)
        scores = factor_scores(data, model).to_frame()
        return _EfaOutcome(
            selection=selection,
            attributes=attributes,
            parallel=parallel,
            model=model,
            labels=factor_labels(model),
            scores=scores,
            notes=notes,
        )

    def cross_validation(self, results: Dict[str, Any]) -> CrossValReport:
        outcome: _EfaOutcome = results["efa"]
        frame: pd.DataFrame = results["metrics"]
        strata = None
        if self.config.cv_stratify:
            days = frame["lifespan_days"].to_numpy()
            strata = assign_quartiles(days, quartile_cutpoints(days)).tolist()
        return cross_validate(
            frame,
            outcome.model,
            ratio=self.config.split_ratio,
            seed=self.seed_for("cross_validation"),
            strata=strata,
            train_size=self.config.cv_train_size,
        )

    def _split(self, scores: pd.DataFrame) -> Tuple[str, List[int], List[int], float]:
        column = SPLIT_SCORE if SPLIT_SCORE in scores.columns else str(scores.columns[0])
        low, high, cutpoint = median_split(scores[column].to_numpy())
        return column, low, high, cutpoint

    def correlations(self, results: Dict[str, Any]) -> Tuple[List[CorrelationRow], float]:
        outcome: _EfaOutcome = results["efa"]
        dynamics: pd.DataFrame = results["metrics"][DYNAMICS_ATTRIBUTES]
        scores = outcome.scores
        column, low, high, cutpoint = self._split(scores)
        logger.info(f"{column} median cutpoint {cutpoint:.4f} ({len(low)} low / {len(high)} high)")

        rows: List[CorrelationRow] = []
        for group, members in (("overall", None), ("low", low), ("high", high)):
            for score in scores.columns:
                for dynamic in DYNAMICS_ATTRIBUTES:
                    x = scores[score].to_numpy()
                    y = dynamics[dynamic].to_numpy()
                    if members is not None:
                        x, y = x[members], y[members]
                    result = spearman_rho(x, y)
                    rows.append(CorrelationRow(
                        group=group, score=str(score), dynamic=dynamic,
                        rho=result.rho, p_value=result.p_value, n=result.n,
                    ))
        return rows, cutpoint

    def bootstrap(self, results: Dict[str, Any]) -> List[BootstrapRow]:
        outcome: _EfaOutcome = results["efa"]
        dynamics: pd.DataFrame = results["metrics"][DYNAMICS_ATTRIBUTES]
        scores = outcome.scores
        _, low, high, _ = self._split(scores)
        correlations: List[CorrelationRow] = results["correlations"][0]
        rho = {(c.group, c.score, c.dynamic): c.rho for c in correlations}

        rows: List[BootstrapRow] = []
        for score in scores.columns:
            for dynamic in DYNAMICS_ATTRIBUTES:
                x = scores[score].to_numpy()
                y = dynamics[dynamic].to_numpy()
                result = bootstrap_group_difference(
                    (x[high], y[high]),
                    (x[low], y[low]),
                    iterations=self.config.bootstrap_iterations,
                    seed=self.seed_for(f"bootstrap:{score}:{dynamic}"),
                    mode=self.config.bootstrap_mode,
                    workers=self.config.bootstrap_workers,
                )
                logger.info(f"Bootstrap {score}-{dynamic}: z={result.z:.3f} p={result.p_value:.4g}")
                overall = bootstrap_rho_z(
                    x, y,
                    iterations=self.config.bootstrap_iterations,
                    seed=self.seed_for(f"bootstrap_rho:{score}:{dynamic}"),
                    mode=self.config.bootstrap_mode,
                    workers=self.config.bootstrap_workers,
                )
                logger.info(f"Bootstrap rho {score}-{dynamic}: z={overall.z:.3f} p={overall.p_value:.4g}")
                rows.append(BootstrapRow(
                    score=str(score), dynamic=dynamic,
                    rho_high=rho[("high", str(score), dynamic)],
                    rho_low=rho[("low", str(score), dynamic)],
                    result=result,
                    rho_z=overall,
                ))
        return rows

    def regression(self, results: Dict[str, Any]) -> Tuple[Dict[str, RegressionFit], List[PercentEffect]]:
        outcome: _EfaOutcome = results["efa"]
        dynamics: pd.DataFrame = results["metrics"][DYNAMICS_ATTRIBUTES]
        fits = dynamics_on_scores(dynamics, outcome.scores, self.config.zero_policy, workers=3)
        effects = [
            PercentEffect(response=fit.response, term=term.name, coef=term.coef, percent=percent_effect(term.coef))
            for fit in fits.values()
            for term in fit.terms
            if term.name != "Intercept"
        ]
        return fits, effects

    def age_interaction(self, results: Dict[str, Any]) -> Tuple[AgeGroupSummary, Dict[str, RegressionFit]]:
        retained, _ = results["filter"]
        frame: pd.DataFrame = results["metrics"]
        groups = assign_age_groups(retained)
        fits = dynamics_on_metrics_by_age(
            frame[DYNAMICS_ATTRIBUTES], frame[INTERACTION_METRICS], groups, self.config.zero_policy, workers=3
        )
        summary = AgeGroupSummary(
            cutpoints=groups.cutpoints,
            group_sizes={g: groups.groups.count(g) for g in ("G1", "G2", "G3", "G4")},
            excluded_without_release=groups.excluded_without_release,
        )
        return summary, fits

    def lifespan(
        self, results: Dict[str, Any]
    ) -> Tuple[LifespanSummary, Dict[str, Dict[str, DescriptiveStats]], PairwiseComparisonTable]:
        frame: pd.DataFrame = results["metrics"]
        partition = partition_by_days(frame["lifespan_days"].astype(int).tolist())
        metrics = {m: frame[m].to_numpy() for m in LIFESPAN_METRICS}
        summary = {m: quartile_summary(values, partition) for m, values in metrics.items()}
        table = compare_groups(
            metrics,
            partition,
            alpha=self.config.alpha,
            bonferroni_divisor=self.config.bonferroni_divisor,
            workers=self.config.workers,
        )
        partition_summary = LifespanSummary(
            cutpoints=partition.cutpoints,
            group_sizes={q: len(rows) for q, rows in partition.groups.items()},
            max_observed=partition.max_observed,
        )
        return partition_summary, summary, table


def run_pipeline(
    config: AnalysisConfig,
    dataset: Optional[LoadedDataset] = None,
    targets: Optional[Iterable[str]] = None,
) -> AnalysisReport:
    """
    Run the analysis and assemble the report.

    Args:
        config: Validated analysis configuration
        dataset: Pre-loaded records; loaded from ``config.dataset`` when omitted
        targets: Run only these stages and what they depend on

    Raises:
        DataError: the dataset cannot be loaded
        StageError: a required stage failed
    """
    dataset = dataset or load_records(config)
    reference_date = resolve_reference_date(config, dataset.records)
    pipeline = _Pipeline(config, dataset.records, reference_date)
    runner = StageRunner(pipeline.graph(), skip=set(config.skip_stages), workers=config.workers)
    outcomes = runner.run(targets)
    results = runner.results

    report = AnalysisReport(
        parse=dataset.parse,
        provenance=Provenance(
            package_version=__version__,
            library_versions=_library_versions(),
            config=json.loads(canonical_json(config)),
            config_hash=config_hash(config),
            seed=config.seed,
            dataset_sha256=dataset.sha256,
            reference_date=reference_date,
        ),
    )
    for name in STAGE_ORDER:
        if name not in outcomes:
            continue
        outcome = outcomes[name]
        report.stage_status[name] = outcome.status
        if outcome.note:
            report.notes[name] = outcome.note

    if "filter" in results:
        report.filter = results["filter"][1]
    if "metrics" in results:
        report._metrics = results["metrics"]
    if "descriptive" in results:
        report.descriptive, report.dynamics_descriptive = results["descriptive"]
    if "distfit" in results:
        report.distribution_fits, report._plot_data = results["distfit"]
    if "efa" in results:
        efa: _EfaOutcome = results["efa"]
        report.selection = efa.selection
        report.efa_attributes = efa.attributes
        report.parallel_analysis = efa.parallel
        report.factor_model = efa.model
        report.factor_labels = efa.labels
        report._scores = efa.scores
        if efa.notes:
            report.notes["efa"] = "; ".join(efa.notes)
    if "cross_validation" in results:
        report.cross_validation = results["cross_validation"]
    if "correlations" in results:
        report.correlations, report.median_cutpoint = results["correlations"]
    if "bootstrap" in results:
        report.bootstrap = results["bootstrap"]
    if "regression" in results:
        report.regression_scores, report.percent_effects = results["regression"]
    if "age_interaction" in results:
        report.age_groups, report.regression_age = results["age_interaction"]
    if "lifespan" in results:
        report.lifespan_partition, report.lifespan_summary, report.lifespan_comparisons = results["lifespan"]

    report.provenance.stage_seeds = dict(sorted(pipeline.seeds.items()))
    return report
