"""
Foundational statistics: descriptive moments, Spearman correlation, Mann-Whitney U,
Cliff's delta, median split and the Spearman bootstrap z-test.

Ties are handled with average ranks everywhere, so Cliff's delta and U satisfy
delta = 2U/(n_a*n_b) - 1 exactly. Bootstrap replicates are drawn in fixed-size
blocks, each from its own PCG64 stream spawned from the seed, which makes the
result independent of the number of worker threads.

Documentation:
- scipy.stats: https://docs.scipy.org/doc/scipy/reference/stats.html
- numpy random SeedSequence: https://numpy.org/doc/stable/reference/random/parallel.html

Sample Input:
  spearman_rho([1, 2, 3, 4, 5], [2, 1, 4, 3, 5])
  cliffs_delta([1, 2], [1, 3])

Expected Output:
  CorrelationResult(rho=0.8, p_value=0.104..., n=5)
  -0.25
"""

import itertools
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field
from scipy import stats

from engagement_analytics.errors import (
    DegenerateInput,
    DegeneratePartition,
    EmptySample,
    InsufficientData,
    InsufficientIterations,
    LengthMismatch,
)

BootstrapMode = Literal["literal", "paired_difference"]

RNG_ALGORITHM = "PCG64"
BOOTSTRAP_BLOCK = 250
MIN_BOOTSTRAP_ITERATIONS = 100
EXACT_U_LIMIT = 16


class DescriptiveStats(BaseModel):
    """Moments and five-number summary; skewness/kurtosis are None when undefined."""

    n: int
    mean: float
    std_dev: float = Field(..., ge=0.0)
    skewness: Optional[float] = None
    kurtosis: Optional[float] = Field(None, description="Excess kurtosis, bias-adjusted.")
    min: float
    p25: float
    median: float
    p75: float
    max: float


class CorrelationResult(BaseModel):
    rho: float = Field(..., ge=-1.0, le=1.0)
    p_value: float = Field(..., ge=0.0, le=1.0)
    n: int


class BootstrapResult(BaseModel):
    """Outcome of a bootstrap z-test on a Spearman correlation or a difference of two."""

    mode: BootstrapMode
    observed: float = Field(..., description="Observed rho, or rho_high - rho_low for group differences.")
    z: float
    p_value: float = Field(..., ge=0.0, le=1.0)
    iterations: int
    se_bootstrap: float = Field(..., ge=0.0)
    delta_mean: float = Field(..., description="Mean of the bootstrap deviations from the observed value.")
    delta_median: float
    seed: int
    rng: str = RNG_ALGORITHM


class GroupComparisonResult(BaseModel):
    u_statistic: float = Field(..., ge=0.0)
    p_value: float = Field(..., ge=0.0, le=1.0)
    cliffs_delta: float = Field(..., ge=-1.0, le=1.0)
    n_a: int
    n_b: int


def _as_array(sample: Sequence[float]) -> np.ndarray:
    values = np.asarray(sample, dtype=float)
    if values.size == 0:
        raise EmptySample("Sample is empty")
    return values


def descriptive_stats(sample: Sequence[float]) -> DescriptiveStats:
    """
    Summarize a sample.

    Uses the (n-1) variance, bias-adjusted skewness and excess kurtosis, and
    linearly interpolated percentiles.
    """
    values = _as_array(sample)
    n = values.size
    std = float(np.std(values, ddof=1)) if n > 1 else 0.0
    variable = std > 0.0

    skewness = float(stats.skew(values, bias=False)) if n >= 3 and variable else None
    kurtosis = float(stats.kurtosis(values, fisher=True, bias=False)) if n >= 4 and variable else None
    p25, median, p75 = np.percentile(values, [25, 50, 75])

    return DescriptiveStats(
        n=n,
        mean=float(np.mean(values)),
        std_dev=std,
        skewness=skewness,
        kurtosis=kurtosis,
        min=float(values.min()),
        p25=float(p25),
        median=float(median),
        p75=float(p75),
        max=float(values.max()),
    )


def _rank_correlation(x: np.ndarray, y: np.ndarray) -> float:
    rx = stats.rankdata(x)
    ry = stats.rankdata(y)
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        return float("nan")
    return float(np.clip(np.corrcoef(rx, ry)[0, 1], -1.0, 1.0))


def _check_pair(x: Sequence[float], y: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    xs, ys = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if xs.size != ys.size:
        raise LengthMismatch(f"x has {xs.size} values, y has {ys.size}")
    if xs.size < 3:
        raise InsufficientData(f"Spearman correlation needs at least 3 pairs, got {xs.size}")
    if np.unique(xs).size < 2 or np.unique(ys).size < 2:
        raise DegenerateInput("Spearman correlation is undefined for a constant vector")
    return xs, ys


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    """
    Spearman rank correlation with a t-approximation p-value.

    Raises:
        LengthMismatch, InsufficientData, DegenerateInput
    """
    xs, ys = _check_pair(x, y)
    n = xs.size
    rho = _rank_correlation(xs, ys)
    if abs(rho) >= 1.0:
        p_value = 0.0
    else:
        t = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
        p_value = float(2.0 * stats.t.sf(abs(t), n - 2))
    return CorrelationResult(rho=rho, p_value=min(p_value, 1.0), n=n)


def _u_statistic(ranks: np.ndarray, n_a: int) -> float:
    return float(ranks[:n_a].sum() - n_a * (n_a + 1) / 2.0)


def _exact_u_p(ranks: np.ndarray, n_a: int, u: float) -> float:
    # Two-sided: share of all assignments at least as far from the mean as u.
    n_b = ranks.size - n_a
    center = n_a * n_b / 2.0
    observed = abs(u - center)
    extreme = 0
    total = 0
    for chosen in itertools.combinations(range(ranks.size), n_a):
        total += 1
        if abs(ranks[list(chosen)].sum() - n_a * (n_a + 1) / 2.0 - center) >= observed - 1e-9:
            extreme += 1
    return extreme / total


def _normal_u_p(ranks: np.ndarray, n_a: int, u: float) -> float:
    n = ranks.size
    n_b = n - n_a
    _, ties = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(ties**3 - ties)) / (n * (n - 1)) if n > 1 else 0.0
    variance = n_a * n_b / 12.0 * ((n + 1) - tie_term)
    if variance <= 0.0:
        return 1.0
    z = max(abs(u - n_a * n_b / 2.0) - 0.5, 0.0) / np.sqrt(variance)
    return float(min(2.0 * stats.norm.sf(z), 1.0))


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float]:
    """
    Mann-Whitney U for ``a`` against ``b`` with a two-sided p-value.

    U counts pairs with a > b plus half the ties. The p-value is exact when the
    combined size is at most 16 and otherwise uses the tie-corrected normal
    approximation with continuity correction.
    """
    xa, xb = _as_array(a), _as_array(b)
    ranks = stats.rankdata(np.concatenate([xa, xb]))
    u = _u_statistic(ranks, xa.size)
    if ranks.size <= EXACT_U_LIMIT:
        return u, _exact_u_p(ranks, xa.size, u)
    return u, _normal_u_p(ranks, xa.size, u)


def cliffs_delta(a: Sequence[float], b: Sequence[float]) -> float:
    """Cliff's delta via binary search over the sorted second sample."""
    xa, xb = _as_array(a), _as_array(b)
    ordered = np.sort(xb)
    below = np.searchsorted(ordered, xa, side="left")
    above = xb.size - np.searchsorted(ordered, xa, side="right")
    delta = float((below.sum() - above.sum()) / (xa.size * xb.size))
    return float(np.clip(delta, -1.0, 1.0))


def compare_samples(a: Sequence[float], b: Sequence[float]) -> GroupComparisonResult:
    """Mann-Whitney U, its p-value and Cliff's delta for two groups."""
    u, p_value = mann_whitney_u(a, b)
    return GroupComparisonResult(
        u_statistic=u,
        p_value=p_value,
        cliffs_delta=cliffs_delta(a, b),
        n_a=len(a),
        n_b=len(b),
    )


def median_split(scores: Sequence[float]) -> Tuple[List[int], List[int], float]:
    """Split indices at the 50th percentile; scores equal to the cutpoint go low."""
    values = _as_array(scores)
    if values.size < 2:
        raise EmptySample("Median split needs at least two scores")
    cutpoint = float(np.percentile(values, 50))
    low = [int(i) for i in np.flatnonzero(values <= cutpoint)]
    high = [int(i) for i in np.flatnonzero(values > cutpoint)]
    return low, high, cutpoint


def quartile_cutpoints(values: Sequence[float]) -> Tuple[float, float, float]:
    """Empirical 25/50/75 percentiles; raises DegeneratePartition unless strictly ascending."""
    array = _as_array(values)
    cuts = tuple(float(c) for c in np.percentile(array, [25, 50, 75]))
    if not cuts[0] < cuts[1] < cuts[2]:
        raise DegeneratePartition(f"Quartile cutpoints are not distinct: {cuts}")
    return cuts[0], cuts[1], cuts[2]


def assign_quartiles(values: Sequence[float], cutpoints: Tuple[float, float, float]) -> np.ndarray:
    """Quartile number 1-4 per value; a value equal to a cutpoint takes the lower quartile."""
    return np.searchsorted(np.asarray(cutpoints), np.asarray(values, dtype=float), side="left") + 1


def _replicates(
    statistic: Callable[[np.random.Generator], float],
    iterations: int,
    seed: int,
    workers: int,
) -> np.ndarray:
    """Evaluate ``statistic`` ``iterations`` times; block i always uses child stream i."""
    sizes = [BOOTSTRAP_BLOCK] * (iterations // BOOTSTRAP_BLOCK)
    if iterations % BOOTSTRAP_BLOCK:
        sizes.append(iterations % BOOTSTRAP_BLOCK)
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    def run_block(job: Tuple[int, np.random.SeedSequence]) -> np.ndarray:
        size, child = job
        rng = np.random.Generator(np.random.PCG64(child))
        return np.array([statistic(rng) for _ in range(size)], dtype=float)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        blocks = list(pool.map(run_block, zip(sizes, children)))
    return np.concatenate(blocks)


def _summarize(
    mode: BootstrapMode, observed: float, draws: np.ndarray, iterations: int, seed: int
) -> BootstrapResult:
    finite = draws[np.isfinite(draws)]
    if finite.size < 2:
        raise DegenerateInput("Bootstrap produced fewer than two defined replicates")
    if finite.size < draws.size:
        logger.warning(f"Dropped {draws.size - finite.size} constant bootstrap resamples")
    deltas = finite - observed
    se = float(np.std(deltas, ddof=1))
    if se == 0.0:
        raise DegenerateInput("Bootstrap standard error is zero")
    z = observed / se
    return BootstrapResult(
        mode=mode,
        observed=observed,
        z=z,
        p_value=float(min(2.0 * stats.norm.sf(abs(z)), 1.0)),
        iterations=iterations,
        se_bootstrap=se,
        delta_mean=float(np.mean(deltas)),
        delta_median=float(np.median(deltas)),
        seed=seed,
    )


def bootstrap_rho_z(
    x: Sequence[float],
    y: Sequence[float],
    iterations: int,
    seed: int,
    mode: BootstrapMode = "literal",
    workers: int = 4,
) -> BootstrapResult:
    """
    Bootstrap z-test of a Spearman correlation.

    In ``literal`` mode x and y are resampled independently of each other and
    z = rho0 / sd(rho_i - rho0). In ``paired_difference`` mode (x, y) rows are
    resampled jointly.

    Args:
        x: First variable
        y: Second variable
        iterations: Number of bootstrap replicates B (at least 100)
        seed: Root seed for the replicate streams
        mode: "literal" or "paired_difference"
        workers: Threads used to evaluate replicate blocks

    Raises:
        InsufficientIterations, DegenerateInput, LengthMismatch
    """
    if iterations < MIN_BOOTSTRAP_ITERATIONS:
        raise InsufficientIterations(
            f"Bootstrap needs at least {MIN_BOOTSTRAP_ITERATIONS} iterations, got {iterations}"
        )
    xs, ys = _check_pair(x, y)
    observed = _rank_correlation(xs, ys)

    def statistic(rng: np.random.Generator) -> float:
        return _resample_rho(xs, ys, rng, mode)

    draws = _replicates(statistic, iterations, seed, workers)
    result = _summarize(mode, observed, draws, iterations, seed)
    logger.debug(f"Bootstrap ({mode}, B={iterations}, seed={seed}): z={result.z:.3f}")
    return result


def _resample_rho(x: np.ndarray, y: np.ndarray, rng: np.random.Generator, mode: BootstrapMode) -> float:
    n = x.size
    if mode == "literal":
        return _rank_correlation(x[rng.integers(0, n, n)], y[rng.integers(0, n, n)])
    rows = rng.integers(0, n, n)
    return _rank_correlation(x[rows], y[rows])


def bootstrap_group_difference(
    high: Tuple[Sequence[float], Sequence[float]],
    low: Tuple[Sequence[float], Sequence[float]],
    iterations: int,
    seed: int,
    mode: BootstrapMode = "paired_difference",
    workers: int = 4,
) -> BootstrapResult:
    """
    Bootstrap z-test of rho(high) - rho(low).

    Each replicate resamples within the high and the low group separately. In
    ``paired_difference`` mode (x, y) rows move together; in ``literal`` mode x
    and y are resampled independently, as bootstrap_rho_z does.

    Args:
        high: (x, y) for the high group
        low: (x, y) for the low group
        iterations: Number of bootstrap replicates
        seed: Root seed for the replicate streams
        mode: "literal" or "paired_difference"
        workers: Threads used to evaluate replicate blocks
    """
    if iterations < MIN_BOOTSTRAP_ITERATIONS:
        raise InsufficientIterations(
            f"Bootstrap needs at least {MIN_BOOTSTRAP_ITERATIONS} iterations, got {iterations}"
        )
    hx, hy = _check_pair(*high)
    lx, ly = _check_pair(*low)
    observed = _rank_correlation(hx, hy) - _rank_correlation(lx, ly)

    def statistic(rng: np.random.Generator) -> float:
        return _resample_rho(hx, hy, rng, mode) - _resample_rho(lx, ly, rng, mode)

    draws = _replicates(statistic, iterations, seed, workers)
    return _summarize(mode, observed, draws, iterations, seed)


if __name__ == "__main__":
    import sys

    all_validation_failures = []
    total_tests = 0

    # Test 1: Spearman on a hand-checked pair
    total_tests += 1
    try:
        result = spearman_rho([1, 2, 3, 4, 5], [2, 1, 4, 3, 5])
        assert abs(result.rho - 0.8) < 1e-12, result
    except Exception as e:
        all_validation_failures.append(f"Spearman test failed: {str(e)}")

    # Test 2: exact U p-value
    total_tests += 1
    try:
        u, p = mann_whitney_u([1, 2], [3, 4])
        assert u == 0.0 and abs(p - 1 / 3) < 1e-12, (u, p)
    except Exception as e:
        all_validation_failures.append(f"Mann-Whitney test failed: {str(e)}")

    # Test 3: Cliff's delta with one tie
    total_tests += 1
    try:
        assert cliffs_delta([1, 2], [1, 3]) == -0.25
    except Exception as e:
        all_validation_failures.append(f"Cliff's delta test failed: {str(e)}")

    if all_validation_failures:
        print(f"❌ VALIDATION FAILED - {len(all_validation_failures)} of {total_tests} tests failed:")
        for failure in all_validation_failures:
            print(f"  - {failure}")
        sys.exit(1)
    else:
        print(f"✅ VALIDATION PASSED - All {total_tests} tests produced expected results")
