"""
Golden-number checks against the full published repository dataset.

Skipped unless ENGAGEMENT_DATASET names the dataset CSV. ENGAGEMENT_CONFIG may
name a JSON config carrying the column mapping and snapshot date for it.

Sample Input:
  $ ENGAGEMENT_DATASET=data/repos.csv ENGAGEMENT_CONFIG=data/analysis.json pytest -m dataset
"""

import os
from pathlib import Path

import pytest

from engagement_analytics.config import load_config
from engagement_analytics.pipeline import run_pipeline
from engagement_analytics.regress import percent_effect

pytestmark = [
    pytest.mark.dataset,
    pytest.mark.skipif("ENGAGEMENT_DATASET" not in os.environ, reason="ENGAGEMENT_DATASET is not set"),
]


@pytest.fixture(scope="module")
def report():
    config_path = os.environ.get("ENGAGEMENT_CONFIG")
    config = load_config(
        Path(config_path) if config_path else None,
        {"dataset": os.environ["ENGAGEMENT_DATASET"], "bootstrap_iterations": 1000, "bonferroni_divisor": 48},
    )
    return run_pipeline(config)


def test_descriptive_table(report):
    cpm = report.descriptive["CPM"]
    assert cpm.mean == pytest.approx(507.9813, rel=5e-3)
    assert cpm.median == pytest.approx(3.5268, rel=5e-3)
    assert report.descriptive["WT/m"].mean == pytest.approx(1.0952, rel=5e-3)
    assert report.descriptive["STR/m"].median == pytest.approx(1.0854, rel=5e-3)


def test_distribution_fits(report):
    fits = {f.attribute: f for f in report.distribution_fits}
    assert fits["TI/m"].lognormal.ks_statistic == pytest.approx(0.0198, abs=5e-3)
    assert fits["WT/m"].lognormal.ks_statistic == pytest.approx(0.0324, abs=5e-3)
    exponential = fits["CPM"].exponential
    assert exponential.loc == pytest.approx(0.0994, abs=1e-4)
    assert exponential.scale == pytest.approx(507.88, rel=5e-3)


def test_attribute_selection(report):
    initial = report.selection.checkpoints["initial"]
    assert initial.overall_kmo == pytest.approx(0.57, abs=0.01)
    assert initial.per_variable_msa["CPM"] == pytest.approx(0.48, abs=0.02)
    assert initial.vif["CPM"] == pytest.approx(42.09, rel=0.02)
    assert initial.bartlett_chi2 == pytest.approx(372_759, rel=0.01)
    assert initial.bartlett_df == 78
    assert sorted(report.efa_attributes) == sorted(["TI/m", "IC/m", "WT/m", "STR/m"])


def test_factor_solution(report):
    assert report.parallel_analysis.suggested_factors == 2
    assert report.factor_model.fit.tli >= 0.98
    assert report.factor_model.fit.rmsea <= 0.01
    assert report.cross_validation.train.n == 23_764
    assert report.cross_validation.test.n == 10_182
    assert report.cross_validation.test.fit.rmsea <= 0.08
    assert report.cross_validation.test.fit.cfi >= 0.95


def test_engagement_and_dynamics(report):
    overall = {(r.score, r.dynamic): r.rho for r in report.correlations if r.group == "overall"}
    assert overall[("AES", "CPM")] == pytest.approx(0.664, abs=5e-3)
    assert overall[("AES", "BPM")] == pytest.approx(0.548, abs=5e-3)
    assert report.median_cutpoint == pytest.approx(-0.0906, abs=2e-3)
    assert all(row.result.p_value < 0.001 for row in report.bootstrap)
    # B=1000 here, so the tolerance is wider than at B=10,000
    rho_z = {(row.score, row.dynamic): row.rho_z for row in report.bootstrap}
    assert rho_z[("AES", "CPM")].z == pytest.approx(26.124, rel=0.1)
    cpm = report.regression_scores["CPM"]
    assert cpm.term("AES").coef == pytest.approx(0.4578, abs=5e-3)
    assert cpm.term("PES").coef == pytest.approx(0.0719, abs=5e-3)
    assert percent_effect(0.4578) == pytest.approx(0.581, abs=1e-3)


def test_lifespan_quartiles(report):
    partition = report.lifespan_partition
    assert partition.cutpoints == pytest.approx((541, 1065, 1807), abs=1)
    assert partition.max_observed == 5360
    table = report.lifespan_comparisons
    assert table.corrected_alpha == pytest.approx(0.00104, abs=1e-5)
    assert table.cell("TI/m", "Q1", "Q4").cliffs_delta == pytest.approx(0.551, abs=0.01)
    assert table.cell("BPM", "Q1", "Q4").cliffs_delta == pytest.approx(0.826, abs=0.01)
