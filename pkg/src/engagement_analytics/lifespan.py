"""
Lifespan quartiles and pairwise group comparisons with Bonferroni correction.

Repositories are split at the 25/50/75th percentiles of active-lifespan days
(a lifespan equal to a cutpoint belongs to the lower quartile). Each metric is
summarized per quartile and compared across all six quartile pairs with
Mann-Whitney U and Cliff's delta.

Sample Input:
  partition = partition_by_days([1, 2, 3, 4, 5, 6, 7, 8])
  compare_groups({"TI/m": ti_values}, partition, alpha=0.05)

Expected Output:
  QuartilePartition(cutpoints=(2.75, 4.5, 6.25), groups={'Q1': [0, 1], 'Q2': [2, 3], ...}, max_observed=8)
  PairwiseComparisonTable(alpha=0.05, test_count=6, corrected_alpha=0.00833..., cells=[...])
"""

import itertools
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field

from engagement_analytics.core_model import RepositoryRecord
from engagement_analytics.errors import EmptyGroup, InsufficientData
from engagement_analytics.stats_base import (
    DescriptiveStats,
    GroupComparisonResult,
    assign_quartiles,
    compare_samples,
    descriptive_stats,
    quartile_cutpoints,
)

QUARTILES = ("Q1", "Q2", "Q3", "Q4")
QUARTILE_PAIRS: List[Tuple[str, str]] = list(itertools.combinations(QUARTILES, 2))
MIN_PARTITION_SIZE = 8


class QuartilePartition(BaseModel):
    cutpoints: Tuple[float, float, float]
    groups: Dict[str, List[int]] = Field(..., description="Quartile label -> row indices, ascending.")
    max_observed: int

    @property
    def size(self) -> int:
        return sum(len(rows) for rows in self.groups.values())


class PairwiseCell(BaseModel):
    metric: str
    group_a: str
    group_b: str
    result: GroupComparisonResult
    significant: bool


class PairwiseComparisonTable(BaseModel):
    alpha: float
    test_count: int
    corrected_alpha: float
    cells: List[PairwiseCell]

    def cell(self, metric: str, group_a: str, group_b: str) -> GroupComparisonResult:
        """Result for (group_a, group_b); a reversed pair negates delta and mirrors U."""
        for cell in self.cells:
            if cell.metric != metric:
                continue
            if (cell.group_a, cell.group_b) == (group_a, group_b):
                return cell.result
            if (cell.group_a, cell.group_b) == (group_b, group_a):
                r = cell.result
                return GroupComparisonResult(
                    u_statistic=r.n_a * r.n_b - r.u_statistic,
                    p_value=r.p_value,
                    cliffs_delta=-r.cliffs_delta,
                    n_a=r.n_b,
                    n_b=r.n_a,
                )
        raise KeyError((metric, group_a, group_b))


def partition_by_days(days: Sequence[int]) -> QuartilePartition:
    """
    Quartile partition of lifespans given in days.

    Raises:
        InsufficientData: fewer than 8 lifespans
        DegeneratePartition: cutpoints are not distinct
    """
    if len(days) < MIN_PARTITION_SIZE:
        raise InsufficientData(f"Quartile partition needs at least {MIN_PARTITION_SIZE} lifespans")
    cutpoints = quartile_cutpoints(days)
    quartiles = assign_quartiles(days, cutpoints)
    groups = {label: [int(i) for i in np.flatnonzero(quartiles == q)] for q, label in enumerate(QUARTILES, 1)}
    partition = QuartilePartition(cutpoints=cutpoints, groups=groups, max_observed=int(max(days)))
    logger.info(
        "Lifespan quartile cutpoints {} days, sizes {}",
        tuple(round(c, 1) for c in cutpoints),
        [len(groups[q]) for q in QUARTILES],
    )
    return partition


def partition_lifespan_quartiles(records: Sequence[RepositoryRecord]) -> QuartilePartition:
    return partition_by_days([r.lifespan.days for r in records])


def _group_values(values: Sequence[float], partition: QuartilePartition) -> Dict[str, np.ndarray]:
    array = np.asarray(values, dtype=float)
    if array.size != partition.size:
        raise InsufficientData(f"Metric has {array.size} values, partition covers {partition.size}")
    grouped: Dict[str, np.ndarray] = {}
    for label in QUARTILES:
        rows = partition.groups[label]
        if not rows:
            raise EmptyGroup(f"Quartile {label} is empty")
        grouped[label] = array[rows]
    return grouped


def quartile_summary(values: Sequence[float], partition: QuartilePartition) -> Dict[str, DescriptiveStats]:
    """Descriptive statistics of one metric within each quartile."""
    return {label: descriptive_stats(group) for label, group in _group_values(values, partition).items()}


def compare_groups(
    metrics: Mapping[str, Sequence[float]],
    partition: QuartilePartition,
    alpha: float = 0.05,
    bonferroni_divisor: Optional[int] = None,
    workers: int = 4,
) -> PairwiseComparisonTable:
    """
    Mann-Whitney U and Cliff's delta for every metric and quartile pair.

    Args:
        metrics: Metric name -> values aligned with the partition rows
        partition: Lifespan quartiles
        alpha: Family-wise significance level, in (0, 1)
        bonferroni_divisor: Test count for the correction; metrics x 6 pairs when omitted
        workers: Threads used across metrics
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    test_count = bonferroni_divisor or len(metrics) * len(QUARTILE_PAIRS)
    corrected = alpha / test_count
    logger.info(f"Bonferroni: alpha {alpha} / {test_count} tests = {corrected:.5f}")

    def compare(metric: str) -> List[PairwiseCell]:
        grouped = _group_values(metrics[metric], partition)
        cells = []
        for a, b in QUARTILE_PAIRS:
            result = compare_samples(grouped[a], grouped[b])
            cells.append(PairwiseCell(
                metric=metric, group_a=a, group_b=b, result=result,
                significant=result.p_value < corrected,
            ))
        return cells

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        per_metric = list(pool.map(compare, list(metrics)))

    return PairwiseComparisonTable(
        alpha=alpha,
        test_count=test_count,
        corrected_alpha=corrected,
        cells=[cell for cells in per_metric for cell in cells],
    )


if __name__ == "__main__":
    import sys

    all_validation_failures = []
    total_tests = 0

    # Test 1: eight lifespans, two per quartile
    total_tests += 1
    try:
        partition = partition_by_days(list(range(1, 9)))
        assert partition.groups["Q1"] == [0, 1] and partition.groups["Q4"] == [6, 7], partition.groups
    except Exception as e:
        all_validation_failures.append(f"Partition test failed: {str(e)}")

    # Test 2: a strictly decreasing metric separates Q1 from Q4 completely
    total_tests += 1
    try:
        partition = partition_by_days(list(range(1, 13)))
        table = compare_groups({"x": list(range(12, 0, -1))}, partition, workers=1)
        assert table.cell("x", "Q1", "Q4").cliffs_delta == 1.0
    except Exception as e:
        all_validation_failures.append(f"Comparison test failed: {str(e)}")

    if all_validation_failures:
        print(f"❌ VALIDATION FAILED - {len(all_validation_failures)} of {total_tests} tests failed:")
        for failure in all_validation_failures:
            print(f"  - {failure}")
        sys.exit(1)
    else:
        print(f"✅ VALIDATION PASSED - All {total_tests} tests produced expected results")
