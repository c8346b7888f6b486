"""
Report emission: one JSON document, or a bundle of CSV tables.

Both formats always write provenance.json. Column and row order come from the
report model, never from dictionaries built at emission time, so emitting the
same report twice yields byte-identical files.

Documentation:
- pandas.DataFrame.to_csv: https://pandas.pydata.org/docs/reference/api/pandas.DataFrame.to_csv.html

Sample Input:
  emit_report(report, Path("out"), "csv")

Expected Output:
  [PosixPath('out/provenance.json'), PosixPath('out/stage_status.csv'), PosixPath('out/filter.csv'), ...]
"""

import re
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional

import pandas as pd
from loguru import logger

from engagement_analytics.errors import IoFailure
from engagement_analytics.pipeline import AnalysisReport
from engagement_analytics.regress import RegressionFit
from engagement_analytics.stats_base import BootstrapResult, DescriptiveStats

ReportFormat = Literal["json", "csv"]


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_")


def _stats_rows(table: Dict[str, DescriptiveStats], key: str = "attribute") -> List[Dict[str, Any]]:
    return [{key: name, **stats.model_dump()} for name, stats in table.items()]


def _stage_status(report: AnalysisReport) -> pd.DataFrame:
    return pd.DataFrame(
        [{"stage": s, "status": status.value, "note": report.notes.get(s, "")}
         for s, status in report.stage_status.items()],
        columns=["stage", "status", "note"],
    )


def _filter(report: AnalysisReport) -> Optional[pd.DataFrame]:
    if report.filter is None:
        return None
    f = report.filter
    rows = [{"criterion": "input", "count": f.input_count}]
    rows += [{"criterion": c, "count": n} for c, n in f.per_criterion_counts.items()]
    rows.append({"criterion": "retained", "count": f.retained_count})
    return pd.DataFrame(rows)


def _parse_rejections(report: AnalysisReport) -> Optional[pd.DataFrame]:
    if report.parse is None:
        return None
    return pd.DataFrame([r.model_dump() for r in report.parse.rejections], columns=["row", "reason"])


def _descriptive(report: AnalysisReport) -> Optional[pd.DataFrame]:
    return pd.DataFrame(_stats_rows(report.descriptive)) if report.descriptive else None


def _dynamics_descriptive(report: AnalysisReport) -> Optional[pd.DataFrame]:
    return pd.DataFrame(_stats_rows(report.dynamics_descriptive)) if report.dynamics_descriptive else None


def _distribution_fits(report: AnalysisReport) -> Optional[pd.DataFrame]:
    if not report.distribution_fits:
        return None
    rows = []
    for fits in report.distribution_fits:
        for kind in ("lognormal", "exponential"):
            fit = getattr(fits, kind)
            if fit is not None:
                rows.append({
                    "attribute": fits.attribute, "distribution": kind, "shape": fit.shape,
                    "loc": fit.loc, "scale": fit.scale, "ks_statistic": fit.ks_statistic,
                    "n": fit.n, "degenerate": fit.degenerate,
                })
    return pd.DataFrame(rows)


def _pareto_tails(report: AnalysisReport) -> Optional[pd.DataFrame]:
    if not report.distribution_fits:
        return None
    rows = [
        {
            "attribute": fits.attribute, "exponent": fits.pareto.shape, "x_min": fits.pareto.scale,
            "normalization": fits.pareto.normalization, "ks_statistic": fits.pareto.ks_statistic,
            "n": fits.pareto.n, "heavy_tail": fits.pareto.heavy_tail,
        }
        for fits in report.distribution_fits
        if fits.pareto is not None
    ]
    return pd.DataFrame(rows)


def _adequacy(report: AnalysisReport) -> Optional[pd.DataFrame]:
    if report.selection is None:
        return None
    rows = []
    for checkpoint, adequacy in report.selection.checkpoints.items():
        for attribute in adequacy.attributes:
            rows.append({
                "checkpoint": checkpoint, "attribute": attribute,
                "msa": adequacy.per_variable_msa.get(attribute),
                "vif": adequacy.vif.get(attribute),
            })
    return pd.DataFrame(rows)


def _adequacy_summary(report: AnalysisReport) -> Optional[pd.DataFrame]:
    if report.selection is None:
        return None
    return pd.DataFrame([
        {
            "checkpoint": checkpoint, "attributes": len(a.attributes), "overall_kmo": a.overall_kmo,
            "bartlett_chi2": a.bartlett_chi2, "bartlett_df": a.bartlett_df, "bartlett_p": a.bartlett_p,
        }
        for checkpoint, a in report.selection.checkpoints.items()
    ])


def _removals(report: AnalysisReport) -> Optional[pd.DataFrame]:
    if report.selection is None:
        return None
    return pd.DataFrame(
        [r.model_dump() for r in report.selection.removals], columns=["attribute", "criterion", "value"]
    )


def _scree(report: AnalysisReport) -> Optional[pd.DataFrame]:
    pa = report.parallel_analysis
    if pa is None:
        return None
    return pd.DataFrame({
        "component": range(1, len(pa.observed_eigenvalues) + 1),
        "observed": pa.observed_eigenvalues,
        "simulated_mean": pa.simulated_mean_eigenvalues,
    })


def _factor_loadings(report: AnalysisReport) -> Optional[pd.DataFrame]:
    model = report.factor_model
    if model is None:
        return None
    labels = report.factor_labels or model.factor_names
    frame = pd.DataFrame(model.rotated_loadings, columns=labels)
    frame.insert(0, "attribute", model.attributes)
    frame["communality"] = model.communalities
    frame["uniqueness"] = model.uniquenesses
    frame["complexity"] = model.complexity
    return frame


def _factor_fit(report: AnalysisReport) -> Optional[pd.DataFrame]:
    model = report.factor_model
    if model is None:
        return None
    labels = report.factor_labels or model.factor_names
    rows = [{"statistic": k, "factor": "", "value": v} for k, v in model.fit.model_dump().items()]
    for j, label in enumerate(labels):
        rows.append({"statistic": "ss_loadings", "factor": label, "value": model.ss_loadings[j]})
        rows.append({"statistic": "proportion_var", "factor": label, "value": model.proportion_var[j]})
        rows.append({"statistic": "cumulative_var", "factor": label, "value": model.cumulative_var[j]})
    return pd.DataFrame(rows)


def _cross_validation(report: AnalysisReport) -> Optional[pd.DataFrame]:
    cv = report.cross_validation
    if cv is None or report.factor_model is None:
        return None
    labels = report.factor_labels or report.factor_model.factor_names
    rows = []
    for subset_name, subset in (("train", cv.train), ("test", cv.test)):
        for attribute, loadings in subset.loadings.items():
            rows.append({"subset": subset_name, "n": subset.n, "attribute": attribute, **dict(zip(labels, loadings))})
        rows.append({"subset": subset_name, "n": subset.n, "attribute": "", **{
            f"fit_{k}": v for k, v in subset.fit.model_dump().items()
        }})
    return pd.DataFrame(rows)


def _correlations(report: AnalysisReport) -> Optional[pd.DataFrame]:
    if not report.correlations:
        return None
    return pd.DataFrame([c.model_dump() for c in report.correlations])


def _rho_z_columns(result: Optional[BootstrapResult]) -> Dict[str, Any]:
    if result is None:
        return {}
    return {
        "rho_overall": result.observed, "rho_z": result.z, "rho_p_value": result.p_value,
        "rho_se_bootstrap": result.se_bootstrap, "rho_seed": result.seed,
    }


def _bootstrap(report: AnalysisReport) -> Optional[pd.DataFrame]:
    if not report.bootstrap:
        return None
    return pd.DataFrame([
        {
            "score": row.score, "dynamic": row.dynamic, "rho_high": row.rho_high, "rho_low": row.rho_low,
            **row.result.model_dump(),
            **_rho_z_columns(row.rho_z),
        }
        for row in report.bootstrap
    ])


def _regression(fits: Dict[str, RegressionFit]) -> Optional[pd.DataFrame]:
    if not fits:
        return None
    frames = []
    for fit in fits.values():
        table = fit.table()
        table.insert(0, "response", fit.response)
        frames.append(table)
    return pd.concat(frames, ignore_index=True)


def _regression_models(fits: Dict[str, RegressionFit]) -> Optional[pd.DataFrame]:
    if not fits:
        return None
    return pd.DataFrame([
        {
            "response": fit.response, "r_squared": fit.r_squared, "adjusted_r_squared": fit.adjusted_r_squared,
            "n": fit.n, "residual_df": fit.residual_df,
            "offsets": ";".join(f"{k}={v:g}" for k, v in fit.offsets.items()),
        }
        for fit in fits.values()
    ])


def _percent_effects(report: AnalysisReport) -> Optional[pd.DataFrame]:
    if not report.percent_effects:
        return None
    return pd.DataFrame([p.model_dump() for p in report.percent_effects])


def _age_groups(report: AnalysisReport) -> Optional[pd.DataFrame]:
    groups = report.age_groups
    if groups is None:
        return None
    rows = [{"group": g, "size": size} for g, size in groups.group_sizes.items()]
    rows += [{"group": f"cutpoint_{i}", "size": c} for i, c in enumerate(groups.cutpoints, 1)]
    rows.append({"group": "excluded_without_release", "size": groups.excluded_without_release})
    return pd.DataFrame(rows)


def _lifespan_partition(report: AnalysisReport) -> Optional[pd.DataFrame]:
    partition = report.lifespan_partition
    if partition is None:
        return None
    lows = [0.0, *partition.cutpoints]
    highs = [*partition.cutpoints, float(partition.max_observed)]
    return pd.DataFrame([
        {"quartile": q, "size": partition.group_sizes[q], "from_days": lo, "to_days": hi}
        for q, lo, hi in zip(partition.group_sizes, lows, highs)
    ])


def _lifespan_summary(report: AnalysisReport) -> Optional[pd.DataFrame]:
    if not report.lifespan_summary:
        return None
    rows = []
    for metric, per_quartile in report.lifespan_summary.items():
        for row in _stats_rows(per_quartile, key="quartile"):
            rows.append({"metric": metric, **row})
    return pd.DataFrame(rows)


def _lifespan_comparisons(report: AnalysisReport) -> Optional[pd.DataFrame]:
    table = report.lifespan_comparisons
    if table is None:
        return None
    return pd.DataFrame([
        {
            "metric": cell.metric, "group_a": cell.group_a, "group_b": cell.group_b,
            **cell.result.model_dump(), "significant": cell.significant,
            "corrected_alpha": table.corrected_alpha, "test_count": table.test_count,
        }
        for cell in table.cells
    ])


TABLES: Dict[str, Callable[[AnalysisReport], Optional[pd.DataFrame]]] = {
    "stage_status": _stage_status,
    "filter": _filter,
    "parse_rejections": _parse_rejections,
    "descriptive": _descriptive,
    "distribution_fits": _distribution_fits,
    "pareto_tails": _pareto_tails,
    "adequacy": _adequacy,
    "adequacy_summary": _adequacy_summary,
    "attribute_removals": _removals,
    "scree": _scree,
    "factor_loadings": _factor_loadings,
    "factor_fit": _factor_fit,
    "cross_validation": _cross_validation,
    "dynamics_descriptive": _dynamics_descriptive,
    "correlations": _correlations,
    "bootstrap": _bootstrap,
    "regression_scores": lambda r: _regression(r.regression_scores),
    "regression_scores_models": lambda r: _regression_models(r.regression_scores),
    "percent_effects": _percent_effects,
    "age_groups": _age_groups,
    "regression_age": lambda r: _regression(r.regression_age),
    "regression_age_models": lambda r: _regression_models(r.regression_age),
    "lifespan_partition": _lifespan_partition,
    "lifespan_summary": _lifespan_summary,
    "lifespan_comparisons": _lifespan_comparisons,
}


def _write_csv(frame: pd.DataFrame, path: Path, index: bool = False) -> None:
    frame.to_csv(path, index=index, lineterminator="\n")


def emit_report(report: AnalysisReport, out_dir: Path, fmt: ReportFormat = "json") -> List[Path]:
    """
    Write the report under ``out_dir``.

    Args:
        report: A complete or partial report
        out_dir: Target directory, created when missing
        fmt: "json" for report.json, "csv" for one file per table

    Returns:
        Written paths, provenance.json first

    Raises:
        IoFailure: a file could not be written
    """
    written: List[Path] = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        provenance = out_dir / "provenance.json"
        provenance.write_text(report.provenance.model_dump_json(indent=2) + "\n", encoding="utf-8")
        written.append(provenance)

        if fmt == "json":
            path = out_dir / "report.json"
            path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
            written.append(path)
        else:
            for name, build in TABLES.items():
                frame = build(report)
                if frame is None:
                    continue
                path = out_dir / f"{name}.csv"
                _write_csv(frame, path)
                written.append(path)

        if report.scores is not None:
            path = out_dir / "scores.csv"
            _write_csv(report.scores, path, index=True)
            written.append(path)
        if report.plot_data:
            plot_dir = out_dir / "plots"
            plot_dir.mkdir(exist_ok=True)
            for key, frame in report.plot_data.items():
                path = plot_dir / f"{_slug(key)}.csv"
                _write_csv(frame, path)
                written.append(path)
    except OSError as e:
        raise IoFailure(f"Cannot write report to {out_dir}: {e}") from e

    logger.info(f"Wrote {len(written)} report files to {out_dir}")
    return written


def load_report(path: Path) -> AnalysisReport:
    """Read a report.json written by emit_report; row-level tables are not restored."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"Cannot read {path}: {e}") from e
    return AnalysisReport.model_validate_json(text)
