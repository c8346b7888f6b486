"""
Tests for the lifespan quartile partition and pairwise comparisons.
"""

import numpy as np
import pytest

from engagement_analytics.errors import DegeneratePartition, InsufficientData
from engagement_analytics.lifespan import (
    QUARTILE_PAIRS,
    compare_groups,
    partition_by_days,
    partition_lifespan_quartiles,
    quartile_summary,
)


def test_partition_of_eight_lifespans():
    partition = partition_by_days(list(range(1, 9)))
    assert partition.groups == {"Q1": [0, 1], "Q2": [2, 3], "Q3": [4, 5], "Q4": [6, 7]}
    assert partition.max_observed == 8
    assert partition.size == 8


def test_partition_rejects_degenerate_and_short_input():
    with pytest.raises(DegeneratePartition):
        partition_by_days([100] * 10)
    with pytest.raises(InsufficientData):
        partition_by_days([1, 2, 3])


def test_partition_covers_records_and_medians_increase(synthetic_records):
    partition = partition_lifespan_quartiles(synthetic_records)
    assert partition.size == len(synthetic_records)
    days = [r.lifespan.days for r in synthetic_records]
    summary = quartile_summary(days, partition)
    medians = [summary[q].median for q in ("Q1", "Q2", "Q3", "Q4")]
    assert medians == sorted(medians)
    assert len(set(medians)) == 4


def test_constant_metric_summary():
    partition = partition_by_days(list(range(1, 13)))
    summary = quartile_summary([2.0] * 12, partition)
    assert {s.median for s in summary.values()} == {2.0}
    assert all(s.skewness is None for s in summary.values())


@pytest.fixture
def comparison():
    rng = np.random.default_rng(0)
    days = rng.integers(30, 3000, 400)
    partition = partition_by_days(days.tolist())
    metrics = {
        "TI/m": 100.0 / days + rng.uniform(0, 0.01, 400),
        "noise": rng.normal(size=400),
    }
    return compare_groups(metrics, partition, workers=2)


def test_default_bonferroni_divisor(comparison):
    assert comparison.test_count == 2 * 6
    assert comparison.corrected_alpha == pytest.approx(0.05 / 12)
    assert len(comparison.cells) == 12
    assert [(c.group_a, c.group_b) for c in comparison.cells[:6]] == QUARTILE_PAIRS


def test_declining_metric_is_significant(comparison):
    result = comparison.cell("TI/m", "Q1", "Q4")
    assert result.cliffs_delta > 0.9
    cell = next(c for c in comparison.cells if c.metric == "TI/m" and c.group_b == "Q4" and c.group_a == "Q1")
    assert cell.significant


def test_reversed_pair_is_antisymmetric(comparison):
    forward = comparison.cell("noise", "Q2", "Q3")
    backward = comparison.cell("noise", "Q3", "Q2")
    assert backward.cliffs_delta == -forward.cliffs_delta
    assert backward.u_statistic == forward.n_a * forward.n_b - forward.u_statistic
    assert backward.p_value == forward.p_value


def test_identical_groups_are_not_significant():
    partition = partition_by_days(list(range(1, 13)))
    table = compare_groups({"flat": [1.0, 2.0, 3.0] * 4}, partition, workers=1)
    # Q1..Q4 each hold [1, 2, 3] in order
    assert all(c.result.cliffs_delta == 0.0 for c in table.cells)
    assert not any(c.significant for c in table.cells)


def test_bonferroni_override():
    partition = partition_by_days(list(range(1, 13)))
    table = compare_groups({"x": list(range(12))}, partition, bonferroni_divisor=48, workers=1)
    assert table.test_count == 48
    assert table.corrected_alpha == pytest.approx(0.00104, abs=1e-5)
    with pytest.raises(ValueError):
        compare_groups({"x": list(range(12))}, partition, alpha=1.5)
