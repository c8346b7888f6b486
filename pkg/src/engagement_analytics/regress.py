"""
OLS regression of log-transformed project dynamics on engagement scores, and on
individual log engagement metrics moderated by release-age group.

Coefficients come from a column-pivoted QR decomposition, never from an
explicit inverse of X'X, so near-collinear interaction designs stay stable.

Documentation:
- scipy.linalg.qr: https://docs.scipy.org/doc/scipy/reference/generated/scipy.linalg.qr.html
- scipy.stats.t: https://docs.scipy.org/doc/scipy/reference/generated/scipy.stats.t.html

Sample Input:
  design = np.column_stack([np.ones(4), [0, 1, 2, 3]])
  ols_fit(design, np.array([1, 3, 5, 7.5]), ["Intercept", "x"])

Expected Output:
  RegressionFit(terms=[Term(name='Intercept', coef=0.9, ...), Term(name='x', coef=2.15, ...)], ...)
"""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field
from scipy import linalg, stats

from engagement_analytics.core_model import RepositoryRecord
from engagement_analytics.errors import (
    LengthMismatch,
    NonPositiveValue,
    NoReleases,
    RankDeficient,
    TooFewRows,
)
from engagement_analytics.stats_base import assign_quartiles, quartile_cutpoints

ZeroPolicy = Literal["strict", "offset"]

AGE_GROUPS = ("G1", "G2", "G3", "G4")
RANK_TOLERANCE = 1e-10


class Term(BaseModel):
    name: str
    coef: float
    se: float
    t: float
    p_value: float


class RegressionFit(BaseModel):
    """One fitted OLS model, laid out as term / coef / se / p."""

    response: str = ""
    terms: List[Term]
    r_squared: float = Field(..., ge=0.0, le=1.0)
    adjusted_r_squared: float
    n: int
    residual_df: int
    offsets: Dict[str, float] = Field(
        default_factory=dict, description="Half-min offsets added before taking logs, per column."
    )

    def term(self, name: str) -> Term:
        for term in self.terms:
            if term.name == name:
                return term
        raise KeyError(name)

    def table(self) -> pd.DataFrame:
        return pd.DataFrame([t.model_dump() for t in self.terms])


class AgeGroupAssignment(BaseModel):
    repositories: List[str]
    ages_days: List[int]
    groups: List[str]
    cutpoints: Tuple[float, float, float]
    excluded_without_release: int = 0


def log_transform(values: Sequence[float], zero_policy: ZeroPolicy = "offset") -> Tuple[np.ndarray, float]:
    """
    Natural log of a vector.

    Under ``offset`` the whole vector is shifted by half its smallest positive
    value first, whether or not it contains zeros. The offset (0.0 under
    ``strict``) is returned with the logs.

    Raises:
        NonPositiveValue: a value <= 0 under ``strict``, or a negative value
            (or no positive value) under ``offset``
    """
    array = np.asarray(values, dtype=float)
    if zero_policy == "strict":
        if np.any(array <= 0.0):
            raise NonPositiveValue("log_transform(strict) requires every value > 0")
        return np.log(array), 0.0
    if np.any(array < 0.0):
        raise NonPositiveValue("log_transform(offset) requires every value >= 0")
    positive = array[array > 0.0]
    if positive.size == 0:
        raise NonPositiveValue("Cannot derive a log offset from an all-zero vector")
    offset = float(positive.min()) / 2.0
    logger.debug(f"log offset {offset:g} applied, {int(np.sum(array == 0.0))} zero value(s)")
    return np.log(array + offset), offset


def percent_effect(coefficient: float) -> float:
    """Relative change exp(beta) - 1 implied by a log-response coefficient."""
    return math.expm1(coefficient)


def ols_fit(design: np.ndarray, response: Sequence[float], names: Sequence[str]) -> RegressionFit:
    """
    Ordinary least squares with classical standard errors.

    Args:
        design: n x q matrix including an intercept column
        response: n-vector
        names: One term name per design column

    Raises:
        TooFewRows: n <= q
        RankDeficient: design columns are linearly dependent
        LengthMismatch: response or names do not match the design
    """
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    n, q = x.shape
    if y.size != n or len(names) != q:
        raise LengthMismatch(f"design is {n}x{q}, response has {y.size}, names has {len(names)}")
    if n <= q:
        raise TooFewRows(f"OLS needs more rows than columns ({n} <= {q})")
    qm, r, perm = linalg.qr(x, mode="economic", pivoting=True)
    diagonal = np.abs(np.diag(r))
    rank = int(np.sum(diagonal > RANK_TOLERANCE * diagonal[0])) if diagonal[0] > 0 else 0
    if rank < q:
        dependent = [names[i] for i in perm[rank:]]
        raise RankDeficient(f"Design has rank {rank} < {q}; dependent columns: {dependent}")

    permuted = linalg.solve_triangular(r, qm.T @ y)
    beta = np.empty(q)
    beta[perm] = permuted

    residual = y - x @ beta
    df = n - q
    ssr = float(residual @ residual)
    sigma2 = ssr / df
    r_inv = linalg.solve_triangular(r, np.eye(q))
    covariance = np.empty((q, q))
    covariance[np.ix_(perm, perm)] = sigma2 * (r_inv @ r_inv.T)
    se = np.sqrt(np.maximum(np.diag(covariance), 0.0))
    safe_se = np.where(se > 0.0, se, 1.0)
    t = np.where(se > 0.0, beta / safe_se, np.where(beta == 0.0, 0.0, np.sign(beta) * np.inf))
    p_values = 2.0 * stats.t.sf(np.abs(t), df)

    centered = y - y.mean()
    sst = float(centered @ centered)
    r_squared = 1.0 - ssr / sst if sst > 0.0 else 1.0
    r_squared = float(min(max(r_squared, 0.0), 1.0))
    adjusted = 1.0 - (1.0 - r_squared) * (n - 1) / df

    return RegressionFit(
        terms=[
            Term(name=name, coef=float(b), se=float(s), t=float(tv), p_value=float(p))
            for name, b, s, tv, p in zip(names, beta, se, t, p_values)
        ],
        r_squared=r_squared,
        adjusted_r_squared=float(adjusted),
        n=n,
        residual_df=df,
    )


def release_age_days(record: RepositoryRecord) -> Optional[int]:
    if record.last_release is None:
        return None
    return (record.last_release - record.created_at).days


def assign_age_groups(records: Sequence[RepositoryRecord]) -> AgeGroupAssignment:
    """
    Quartile age groups G1 (youngest) to G4 from creation-to-last-release age.

    Records without a release are left out and counted.

    Raises:
        NoReleases: no record has a release
        DegeneratePartition: cutpoints are not distinct
    """
    with_release = [(r, release_age_days(r)) for r in records if r.last_release is not None]
    excluded = len(records) - len(with_release)
    if excluded:
        logger.info(f"Age-group analysis excludes {excluded} repositories without releases")
    if not with_release:
        raise NoReleases("No repository has a release; age groups are undefined")

    ages = [int(age) for _, age in with_release if age is not None]
    cutpoints = quartile_cutpoints(ages)
    quartiles = assign_quartiles(ages, cutpoints)
    return AgeGroupAssignment(
        repositories=[r.full_name for r, _ in with_release],
        ages_days=ages,
        groups=[AGE_GROUPS[q - 1] for q in quartiles],
        cutpoints=cutpoints,
        excluded_without_release=excluded,
    )


def build_interaction_design(
    metrics: Mapping[str, Sequence[float]],
    groups: Sequence[str],
) -> Tuple[np.ndarray, List[str]]:
    """
    Intercept, main effects, G2-G4 dummies (G1 is the reference) and every
    metric x dummy interaction.

    With four metrics and all four groups populated the design has
    1 + 4 + 3 + 12 = 20 columns.

    Raises:
        LengthMismatch: a metric vector and ``groups`` differ in length
    """
    n = len(groups)
    for name, values in metrics.items():
        if len(values) != n:
            raise LengthMismatch(f"{name} has {len(values)} values, groups has {n}")

    labels = np.asarray(groups)
    columns: List[np.ndarray] = [np.ones(n)]
    names = ["Intercept"]
    for name, values in metrics.items():
        columns.append(np.asarray(values, dtype=float))
        names.append(name)
    # groups with no members contribute no dummy or interaction columns
    dummies = {g: (labels == g).astype(float) for g in AGE_GROUPS[1:] if np.any(labels == g)}
    for g, dummy in dummies.items():
        columns.append(dummy)
        names.append(g)
    for name, values in metrics.items():
        for g, dummy in dummies.items():
            columns.append(np.asarray(values, dtype=float) * dummy)
            names.append(f"{name} x {g}")
    return np.column_stack(columns), names


def _log_columns(frame: pd.DataFrame, zero_policy: ZeroPolicy) -> Tuple[Dict[str, np.ndarray], Dict[str, float]]:
    logged: Dict[str, np.ndarray] = {}
    offsets: Dict[str, float] = {}
    for column in frame.columns:
        logged[str(column)], offset = log_transform(frame[column].to_numpy(dtype=float), zero_policy)
        if offset:
            offsets[str(column)] = offset
    return logged, offsets


def dynamics_on_scores(
    dynamics: pd.DataFrame,
    scores: pd.DataFrame,
    zero_policy: ZeroPolicy = "offset",
    workers: int = 3,
) -> Dict[str, RegressionFit]:
    """Regress log(dynamic) on the score columns, one model per dynamics column."""
    responses, offsets = _log_columns(dynamics, zero_policy)
    predictors = list(scores.columns)
    design = np.column_stack([np.ones(len(scores)), scores.to_numpy(dtype=float)])
    names = ["Intercept"] + [str(p) for p in predictors]

    def fit(response: str) -> RegressionFit:
        model = ols_fit(design, responses[response], names)
        return model.model_copy(update={
            "response": f"log {response}",
            "offsets": {k: v for k, v in offsets.items() if k == response},
        })

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        fits = list(pool.map(fit, responses))
    return dict(zip(responses, fits))


def dynamics_on_metrics_by_age(
    dynamics: pd.DataFrame,
    metrics: pd.DataFrame,
    groups: AgeGroupAssignment,
    zero_policy: ZeroPolicy = "offset",
    workers: int = 3,
) -> Dict[str, RegressionFit]:
    """
    Regress log(dynamic) on log metrics, age dummies and their interactions.

    Both frames are indexed by repository and restricted to the repositories in
    ``groups``.
    """
    rows = groups.repositories
    responses, response_offsets = _log_columns(dynamics.loc[rows], zero_policy)
    predictors, predictor_offsets = _log_columns(metrics.loc[rows], zero_policy)
    design, names = build_interaction_design(predictors, groups.groups)

    def fit(response: str) -> RegressionFit:
        model = ols_fit(design, responses[response], names)
        offsets = dict(predictor_offsets)
        if response in response_offsets:
            offsets[response] = response_offsets[response]
        return model.model_copy(update={"response": f"log {response}", "offsets": offsets})

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        fits = list(pool.map(fit, responses))
    return dict(zip(responses, fits))
