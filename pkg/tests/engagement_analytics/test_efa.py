"""
Tests for adequacy checks, attribute selection, factor extraction and scoring.
"""

from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from engagement_analytics.efa import (
    CorrelationMatrix,
    Removal,
    adequacy,
    correlation_matrix,
    cross_validate,
    factor_labels,
    factor_scores,
    fit_efa,
    fit_from_frame,
    load_model,
    parallel_analysis,
    save_model,
    select_attributes,
    split_indices,
    varimax,
    vif,
)
from engagement_analytics.errors import (
    EverythingRemoved,
    InsufficientData,
    SingularMatrix,
    TooFewRows,
    ZeroVariance,
)


def two_factor_frame(n: int = 500, seed: int = 0) -> pd.DataFrame:
    """Three attributes per factor, loadings 0.8."""
    rng = np.random.default_rng(seed)
    active, passive = rng.standard_normal((2, n))
    columns = {}
    for label in ("TI/m", "IC/m", "OI/m"):
        columns[label] = 0.8 * active + 0.6 * rng.standard_normal(n)
    for label in ("WT/m", "STR/m", "FK/m"):
        columns[label] = 0.8 * passive + 0.6 * rng.standard_normal(n)
    return pd.DataFrame(columns, index=[f"org/repo{i}" for i in range(n)])


def exact_pair(r: float, n: int = 200) -> pd.DataFrame:
    """Two columns whose sample correlation is exactly r."""
    rng = np.random.default_rng(1)
    raw = rng.standard_normal((n, 2))
    q, _ = np.linalg.qr(raw - raw.mean(axis=0))
    chol = np.linalg.cholesky(np.array([[1.0, r], [r, 1.0]]))
    return pd.DataFrame(q @ chol.T, columns=["x", "y"])


def test_kmo_equicorrelated():
    values = np.full((3, 3), 0.5)
    np.fill_diagonal(values, 1.0)
    report = adequacy(CorrelationMatrix.from_array(["a", "b", "c"], values), n=100)
    assert report.overall_kmo == pytest.approx(9 / 13)
    assert all(msa == pytest.approx(9 / 13) for msa in report.per_variable_msa.values())
    assert report.bartlett_df == 3
    assert report.bartlett_p < 1e-10


def test_kmo_not_applicable_for_identity():
    report = adequacy(CorrelationMatrix.from_array(["a", "b", "c"], np.eye(3)), n=100)
    assert report.overall_kmo is None
    assert not report.kmo_applicable
    assert set(report.per_variable_msa.values()) == {None}
    assert report.bartlett_chi2 == 0.0
    assert report.bartlett_p == 1.0


def test_singular_matrix_rejected():
    values = np.ones((3, 3))
    with pytest.raises(SingularMatrix):
        adequacy(CorrelationMatrix.from_array(["a", "b", "c"], values), n=50)


def test_vif_for_a_known_correlation():
    factors = vif(exact_pair(0.8))
    assert factors["x"] == pytest.approx(1 / 0.36)
    assert factors["y"] == pytest.approx(1 / 0.36)


def test_correlation_matrix_preconditions():
    with pytest.raises(TooFewRows):
        correlation_matrix(pd.DataFrame({"a": [1.0, 2.0], "b": [2.0, 1.0], "c": [0.0, 1.0]}))
    with pytest.raises(ZeroVariance):
        correlation_matrix(pd.DataFrame({"a": [1.0, 2.0, 3.0, 4.0], "b": [5.0] * 4}))


def test_selection_drops_duplicate_column_first():
    frame = two_factor_frame()
    frame["dup"] = frame["TI/m"] + frame["IC/m"]
    result = select_attributes(frame)
    assert result.removals[0] == Removal(attribute="dup", criterion="perfect_collinearity", value=None)
    assert result.retained == list(two_factor_frame().columns)
    assert list(result.checkpoints) == ["initial", "after_msa", "final"]
    assert all(v is not None and v < 5.0 for v in result.checkpoints["final"].vif.values())


def test_selection_stops_when_too_few_attributes_remain():
    frame = two_factor_frame()[["TI/m", "IC/m"]].copy()
    frame["sum"] = frame["TI/m"] + frame["IC/m"]
    with pytest.raises(EverythingRemoved):
        select_attributes(frame)


def test_rank_one_loadings():
    values = np.full((4, 4), 0.64)
    np.fill_diagonal(values, 1.0)
    model = fit_efa(CorrelationMatrix.from_array(list("abcd"), values), k=1, n=300)
    assert np.allclose(np.asarray(model.rotated_loadings)[:, 0], 0.8, atol=5e-3)
    assert model.communalities == pytest.approx([0.64] * 4, abs=1e-2)
    assert model.fit.srmr == pytest.approx(0.0, abs=5e-3)
    assert model.heywood == []


def test_varimax_preserves_communalities():
    loadings = np.random.default_rng(4).uniform(-0.9, 0.9, (6, 2))
    rotated = varimax(loadings)
    assert np.sum(rotated**2, axis=1) == pytest.approx(np.sum(loadings**2, axis=1))


def test_two_factor_solution_is_labelled():
    frame = two_factor_frame()
    model = fit_from_frame(frame, k=2, seed=5)
    labels = factor_labels(model)
    assert sorted(labels) == ["AES", "PES"]
    loadings = model.loadings.set_axis(labels, axis=1)
    assert loadings.loc["TI/m", "AES"] > 0.7
    assert loadings.loc["STR/m", "PES"] > 0.7
    assert abs(loadings.loc["STR/m", "AES"]) < 0.2
    assert model.cumulative_var[-1] == pytest.approx(sum(model.proportion_var))
    assert model.seed == 5


def test_factor_count_bounds():
    matrix = correlation_matrix(two_factor_frame())
    with pytest.raises(InsufficientData):
        fit_efa(matrix, k=6, n=500)
    with pytest.raises(InsufficientData):
        fit_efa(matrix, k=0, n=500)


def test_parallel_analysis_finds_two_factors():
    frame = two_factor_frame()
    result = parallel_analysis(frame, n_sims=60, seed=3)
    assert result.suggested_factors == 2
    assert result == parallel_analysis(frame, n_sims=60, seed=3)
    with pytest.raises(InsufficientData):
        parallel_analysis(frame, n_sims=10)


def test_scores_at_the_mean_are_zero():
    frame = two_factor_frame()
    model = fit_from_frame(frame, k=2)
    centre = pd.DataFrame([frame.mean()], index=["org/mean"])
    scores = factor_scores(centre, model).to_frame()
    assert scores.loc["org/mean"].abs().max() == pytest.approx(0.0, abs=1e-12)


def test_scores_cover_every_row():
    frame = two_factor_frame(n=200)
    scores = factor_scores(frame, fit_from_frame(frame, k=2)).to_frame()
    assert list(scores.index) == list(frame.index)
    assert scores.index.name == "repository"
    assert np.corrcoef(scores["AES"], frame["TI/m"])[0, 1] > 0.6


def test_saved_model_round_trips(tmp_path: Path):
    model = fit_from_frame(two_factor_frame(), k=2, seed=1)
    path = tmp_path / "models" / "factor_model.json"
    save_model(model, path)
    assert load_model(path) == model


def test_split_indices_partition_rows():
    train, test = split_indices(100, 0.7, seed=2)
    assert len(train) == 70
    assert sorted(np.concatenate([train, test]).tolist()) == list(range(100))
    fixed, _ = split_indices(100, 0.7, seed=2, train_size=64)
    assert len(fixed) == 64


def test_stratified_split_keeps_stratum_shares():
    strata = ["Q1"] * 40 + ["Q2"] * 60
    train, _ = split_indices(100, 0.5, seed=0, strata=strata)
    labels = np.asarray(strata)[train]
    assert (labels == "Q1").sum() == 20
    assert (labels == "Q2").sum() == 30


def test_cross_validation_is_deterministic():
    frame = two_factor_frame()
    reference = fit_from_frame(frame, k=2)
    first = cross_validate(frame, reference, seed=11)
    assert first == cross_validate(frame, reference, seed=11)
    assert first.train.n == 350
    assert first.test.n == 150
    # aligned with the reference, so TI/m loads on its reference factor
    assert first.train.loadings["TI/m"][int(np.argmax(np.abs(reference.rotated_loadings[0])))] > 0.6


def test_cross_validation_needs_a_hundred_rows():
    frame = two_factor_frame(n=90)
    with pytest.raises(InsufficientData):
        cross_validate(frame, fit_from_frame(frame, k=2))


def exact_frame(values: np.ndarray, n: int = 500, extra: int = 0, seed: int = 2) -> pd.DataFrame:
    """Columns with sample correlation exactly ``values``, plus ``extra`` columns orthogonal to everything."""
    p = values.shape[0]
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n, p + extra))
    q, _ = np.linalg.qr(raw - raw.mean(axis=0))
    block = q[:, :p] @ np.linalg.cholesky(values).T
    columns = np.hstack([block, q[:, p:]])
    return pd.DataFrame(columns, columns=[f"v{i}" for i in range(p + extra)])


def equicorrelated(p: int, r: float) -> np.ndarray:
    values = np.full((p, p), r)
    np.fill_diagonal(values, 1.0)
    return values


def test_vif_pass_removes_every_high_attribute_at_once():
    frame = two_factor_frame()
    noise = np.random.default_rng(9).standard_normal((2, len(frame)))
    frame["TI2/m"] = frame["TI/m"] + 0.1 * noise[0]
    frame["WT2/m"] = frame["WT/m"] + 0.1 * noise[1]
    result = select_attributes(frame, msa_threshold=0.01)
    dropped = [r.attribute for r in result.removals if r.criterion == "vif"]
    assert sorted(dropped) == ["TI/m", "TI2/m", "WT/m", "WT2/m"]
    assert all(r.value > 5.0 for r in result.removals)
    assert result.retained == ["IC/m", "OI/m", "STR/m", "FK/m"]


def test_uncorrelated_attribute_lowers_kmo():
    rng = np.random.default_rng(12)
    common = rng.standard_normal(1000)
    frame = pd.DataFrame({f"a{i}": 0.8 * common + 0.6 * rng.standard_normal(1000) for i in range(6)})
    before = adequacy(correlation_matrix(frame), n=1000).overall_kmo
    frame["noise"] = rng.standard_normal(1000)
    after = adequacy(correlation_matrix(frame), n=1000).overall_kmo
    assert after < before


def test_bartlett_grows_with_sample_size():
    matrix = CorrelationMatrix.from_array(list("abcd"), equicorrelated(4, 0.3))
    small = adequacy(matrix, n=100)
    large = adequacy(matrix, n=1000)
    assert 0.0 < small.bartlett_chi2 < large.bartlett_chi2
    assert large.bartlett_p <= small.bartlett_p


def test_vif_is_one_for_orthogonal_columns():
    factors = vif(exact_frame(np.eye(4)))
    assert all(value == pytest.approx(1.0, abs=1e-9) for value in factors.values())


def test_parallel_analysis_on_uncorrelated_columns():
    result = parallel_analysis(exact_frame(np.eye(6)), n_sims=40, seed=1)
    assert result.suggested_factors == 0


def test_parallel_analysis_on_equicorrelated_columns():
    counts = [
        parallel_analysis(exact_frame(equicorrelated(6, 0.5), extra=extra), n_sims=40, seed=1).suggested_factors
        for extra in (0, 2, 4)
    ]
    assert counts[0] == 1
    # appended noise never raises the count
    assert counts == sorted(counts, reverse=True)


def test_varimax_preserves_reconstruction():
    loadings = np.random.default_rng(6).uniform(-0.9, 0.9, (6, 2))
    rotated = varimax(loadings)

    def reconstruct(matrix: np.ndarray) -> np.ndarray:
        return matrix @ matrix.T + np.diag(1.0 - np.sum(matrix**2, axis=1))

    assert np.allclose(reconstruct(rotated), reconstruct(loadings), atol=1e-9)
