"""
Shared fixtures: a seeded synthetic repository population and config helpers.

The synthetic population follows a two-factor structure (an "active" latent
driving issues and comments, a "passive" one driving watchers and stars) so the
factor-analysis and regression stages have something to find.
"""

import math
import shutil
import tempfile
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Callable, List

import numpy as np
import pytest

from engagement_analytics.config import AnalysisConfig
from engagement_analytics.core_model import RepositoryRecord
from engagement_analytics.dataset import write_dataset

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
REFERENCE_DATE = datetime(2024, 6, 1, tzinfo=timezone.utc)
PINNED_ATTRIBUTES = ["TI/m", "IC/m", "WT/m", "STR/m"]


def _count(
    rng: np.random.Generator, months: float, latent: np.ndarray, level: float, a: float, p: float, floor: int
) -> int:
    rate = math.exp(level + a * latent[0] + p * latent[1] + 0.35 * rng.standard_normal())
    return max(floor, int(round(months * rate)))


def make_records(n: int = 160, seed: int = 0, releases: bool = True) -> List[RepositoryRecord]:
    """Synthetic repositories that all pass the exclusion filters at REFERENCE_DATE."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        days = int(rng.integers(120, 3000))
        last_commit = datetime(2023, 1, 1, tzinfo=timezone.utc) - timedelta(days=int(rng.integers(0, 200)))
        created = last_commit - timedelta(days=days)
        months = days / 30.44
        latent = rng.standard_normal(2)

        total_issues = _count(rng, months, latent, 0.5, 0.8, 0.0, 1)
        open_issues = int(rng.integers(0, total_issues + 1))
        total_prs = _count(rng, months, latent, 0.2, 0.6, 0.0, 1)
        open_prs = int(rng.integers(0, total_prs + 1))
        has_release = releases and rng.random() < 0.85
        records.append(RepositoryRecord(
            owner=f"org{i % 7}",
            name=f"repo{i}",
            created_at=created,
            last_commit=last_commit,
            license_id="MIT",
            commits=_count(rng, months, latent, 2.5, 0.7, 0.2, 0),
            contributors=_count(rng, months, latent, -0.5, 0.5, 0.1, 3),
            watchers=_count(rng, months, latent, -0.5, 0.0, 0.9, 0),
            stargazers=_count(rng, months, latent, 1.5, 0.1, 1.0, 0),
            forks=_count(rng, months, latent, 0.0, 0.2, 0.7, 0),
            total_issues=total_issues,
            open_issues=open_issues,
            total_pull_requests=total_prs,
            open_pull_requests=open_prs,
            merged_pull_requests=int(rng.integers(0, total_prs - open_prs + 1)),
            resolved_issues=total_issues - open_issues,
            issue_comments=_count(rng, months, latent, 1.2, 0.9, 0.0, 0),
            pr_comments=_count(rng, months, latent, 0.8, 0.7, 0.0, 0),
            branches=_count(rng, months, latent, -1.0, 0.5, 0.1, 0),
            releases=_count(rng, months, latent, -1.5, 0.4, 0.0, 1 if has_release else 0),
            last_release=created + timedelta(days=int(rng.integers(10, days))) if has_release else None,
        ))
    return records


@pytest.fixture
def workdir():
    """A temporary directory removed after the test."""
    temp_dir = tempfile.mkdtemp()
    yield Path(temp_dir)
    shutil.rmtree(temp_dir)


@pytest.fixture
def synthetic_records() -> List[RepositoryRecord]:
    return make_records()


@pytest.fixture
def synthetic_dataset(workdir: Path, synthetic_records: List[RepositoryRecord]) -> Path:
    path = workdir / "repos.csv"
    write_dataset(synthetic_records, path)
    return path


@pytest.fixture
def make_config(synthetic_dataset: Path) -> Callable[..., AnalysisConfig]:
    """Fast pipeline config over the synthetic dataset; keyword arguments override."""

    def build(**overrides: object) -> AnalysisConfig:
        values = {
            "dataset": synthetic_dataset,
            "reference_date": REFERENCE_DATE,
            "efa_attributes": PINNED_ATTRIBUTES,
            "factor_count": 2,
            "parallel_sims": 50,
            "bootstrap_iterations": 200,
            "bootstrap_workers": 2,
            "workers": 2,
            "seed": 7,
        }
        values.update(overrides)
        return AnalysisConfig.model_validate(values)

    return build
