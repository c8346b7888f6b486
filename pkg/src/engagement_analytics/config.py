"""
Analysis configuration.

AnalysisConfig carries every threshold, seed and switch the pipeline reads.
It is loaded from JSON, overridden by CLI flags, validated by pydantic and
hashed into the report provenance.

Sample Input:
  config = load_config(Path("analysis.json"), {"seed": 7, "factor_count": 2})

Expected Output:
  AnalysisConfig(dataset=PosixPath('data/repos.csv'), seed=7, factor_count=2, ...)
"""

import hashlib
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Set

from pydantic import BaseModel, ConfigDict, Field, field_validator

OPTIONAL_STAGES = {"distfit", "cross_validation", "bootstrap", "age_interaction", "lifespan"}


class AnalysisConfig(BaseModel):
    """Parameters of one analysis run."""

    model_config = ConfigDict(extra="forbid")

    dataset: Optional[Path] = Field(None, description="CSV dataset in the canonical schema or a mapped one.")
    column_mapping: Optional[Path] = Field(None, description="JSON column mapping for the dataset.")
    strict_parse: bool = Field(False, description="Abort on the first unparseable row.")
    reference_date: Optional[datetime] = Field(
        None, description="'Now' for the recency filter; falls back to dataset_snapshot_date."
    )
    dataset_snapshot_date: Optional[datetime] = Field(
        None, description="When the dataset was collected."
    )
    require_license: bool = Field(False, description="Also exclude repositories without an OSI license id.")

    msa_threshold: float = Field(0.5, gt=0.0, lt=1.0)
    vif_threshold: float = Field(5.0, gt=1.0)
    efa_attributes: Optional[List[str]] = Field(
        None, description="Pin the factor-analysis attribute set instead of selecting it."
    )
    factor_count: Optional[int] = Field(None, ge=1, description="Overrides parallel analysis.")
    parallel_sims: int = Field(100, ge=50)
    split_ratio: float = Field(0.7, gt=0.0, lt=1.0)
    cv_train_size: Optional[int] = Field(None, ge=1, description="Exact training-subset size.")
    cv_stratify: bool = Field(False, description="Stratify the split by lifespan quartile.")

    bootstrap_iterations: int = Field(10_000, ge=100)
    bootstrap_mode: Literal["literal", "paired_difference"] = "literal"
    bootstrap_workers: int = Field(4, ge=1)

    alpha: float = Field(0.05, gt=0.0, lt=1.0)
    bonferroni_divisor: Optional[int] = Field(None, ge=1, description="Test count; metrics x pairs when unset.")
    zero_policy: Literal["strict", "offset"] = "offset"

    seed: int = Field(42, ge=0, lt=2**64)
    skip_stages: Set[str] = Field(default_factory=set)
    workers: int = Field(4, ge=1, description="Threads for per-repository and per-attribute work.")

    log_level: str = "INFO"
    log_file: Optional[Path] = None

    @field_validator("skip_stages")
    @classmethod
    def _known_stages(cls, value: Set[str]) -> Set[str]:
        unknown = value - OPTIONAL_STAGES
        if unknown:
            raise ValueError(
                f"Only optional stages can be skipped ({', '.join(sorted(OPTIONAL_STAGES))}); got {sorted(unknown)}"
            )
        return value


def load_config(path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None) -> AnalysisConfig:
    """
    Read a JSON config (when given) and apply non-None overrides on top.

    Raises:
        pydantic.ValidationError: a value is out of range or unknown
    """
    data: Dict[str, Any] = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return AnalysisConfig.model_validate(data)


def canonical_json(config: AnalysisConfig) -> str:
    payload = config.model_dump(mode="json", exclude={"log_level", "log_file"})
    payload["skip_stages"] = sorted(payload["skip_stages"])
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def config_hash(config: AnalysisConfig) -> str:
    """SHA-256 of the canonical JSON form; logging settings do not affect it."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()
