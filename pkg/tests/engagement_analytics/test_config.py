"""
Tests for configuration loading, validation and hashing.
"""

import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from engagement_analytics.config import AnalysisConfig, canonical_json, config_hash, load_config


def test_defaults():
    config = AnalysisConfig()
    assert config.seed == 42
    assert config.split_ratio == 0.7
    assert config.bootstrap_iterations == 10_000
    assert config.bootstrap_mode == "literal"
    assert config.msa_threshold == 0.5
    assert config.vif_threshold == 5.0
    assert config.zero_policy == "offset"


def test_file_values_are_overridden_by_flags(tmp_path: Path):
    path = tmp_path / "analysis.json"
    path.write_text(json.dumps({"seed": 1, "factor_count": 3, "alpha": 0.01}), encoding="utf-8")
    config = load_config(path, {"seed": 9, "factor_count": None})
    assert config.seed == 9
    assert config.factor_count == 3
    assert config.alpha == 0.01


@pytest.mark.parametrize(
    "values",
    [
        {"seed": -1},
        {"split_ratio": 1.0},
        {"bootstrap_iterations": 99},
        {"parallel_sims": 10},
        {"bootstrap_mode": "paired"},
        {"unknown_key": 1},
        {"skip_stages": ["efa"]},
    ],
)
def test_invalid_values_rejected(values):
    with pytest.raises(ValidationError):
        AnalysisConfig.model_validate(values)


def test_only_optional_stages_can_be_skipped():
    config = AnalysisConfig(skip_stages={"bootstrap", "distfit"})
    assert config.skip_stages == {"bootstrap", "distfit"}


def test_hash_ignores_logging_and_set_order():
    first = AnalysisConfig(seed=7, skip_stages={"bootstrap", "lifespan"}, log_level="DEBUG")
    second = AnalysisConfig(seed=7, skip_stages={"lifespan", "bootstrap"})
    assert config_hash(first) == config_hash(second)
    assert len(config_hash(first)) == 64
    assert config_hash(first) != config_hash(AnalysisConfig(seed=8))
    assert json.loads(canonical_json(first))["skip_stages"] == ["bootstrap", "lifespan"]
