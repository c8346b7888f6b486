"""
Tests for the log-normal, exponential and Pareto fits.
"""

import math

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from engagement_analytics.distfit import (
    emit_distribution_plotdata,
    fit_attributes,
    fit_exponential,
    fit_lognormal,
    fit_pareto,
    ks_statistic,
)
from engagement_analytics.errors import DegenerateFit, InsufficientData, NonPositiveValue


def test_ks_statistic_at_mid_quantiles():
    sample = (np.arange(100) + 0.5) / 100
    assert ks_statistic(sample, stats.uniform.cdf) == pytest.approx(0.005)


def test_ks_statistic_for_a_single_observation():
    assert ks_statistic([0.5], stats.uniform.cdf) == pytest.approx(0.5)
    assert ks_statistic([0.2], stats.uniform.cdf) == pytest.approx(0.8)


def test_exponential_fit_small_sample():
    fit = fit_exponential([1, 2, 3])
    assert fit.loc == 1.0
    assert fit.scale == 1.0
    assert fit.ks_statistic == pytest.approx(1 / 3)


def test_exponential_constant_sample():
    with pytest.raises(DegenerateFit):
        fit_exponential([4, 4, 4])


def test_pareto_density_exponent():
    sample = [1.0] + [math.exp(20 / 9)] * 9
    fit = fit_pareto(sample)
    assert fit.shape == pytest.approx(1.5)
    assert fit.scale == 1.0
    assert fit.normalization == pytest.approx(0.5)
    assert fit.heavy_tail


def test_pareto_recovers_tail_on_large_sample():
    sample = stats.pareto(1.5, scale=2.0).rvs(size=5000, random_state=np.random.default_rng(1))
    fit = fit_pareto(sample)
    assert fit.shape == pytest.approx(2.5, abs=0.1)
    assert not fit.heavy_tail
    assert fit.ks_statistic < 0.05


def test_pareto_input_errors():
    with pytest.raises(InsufficientData):
        fit_pareto([1, 2, 3])
    with pytest.raises(NonPositiveValue):
        fit_pareto([0.0] + list(range(1, 12)))
    with pytest.raises(DegenerateFit):
        fit_pareto([2.0] * 12)


def test_lognormal_fit_places_location_below_the_sample():
    sample = stats.lognorm(0.6, loc=3.0, scale=5.0).rvs(size=400, random_state=np.random.default_rng(7))
    fit = fit_lognormal(sample)
    assert fit.kind == "lognormal"
    assert fit.loc < sample.min()
    assert fit.scale > 0.0
    assert fit.shape is not None and fit.shape > 0.0


def test_lognormal_fit_recovers_quantiles():
    truth = stats.lognorm(0.5, loc=2.0, scale=4.0)
    sample = truth.rvs(size=2000, random_state=np.random.default_rng(13))
    fit = fit_lognormal(sample)
    levels = [0.1, 0.5, 0.9]
    assert fit.frozen().ppf(levels) == pytest.approx(truth.ppf(levels), rel=0.05)
    assert fit.ks_statistic < 0.05
    assert not fit.degenerate


def test_lognormal_needs_ten_values():
    with pytest.raises(InsufficientData):
        fit_lognormal([1, 2, 3, 4, 5])
    with pytest.raises(InsufficientData):
        fit_lognormal([2.0] * 20)


def test_plotdata_columns():
    sample = [3.0, 1.0, 2.0, 5.0]
    frame = emit_distribution_plotdata(sample, fit_exponential(sample))
    assert list(frame.columns) == ["x", "ecdf", "fitted_cdf", "qq_theoretical"]
    assert list(frame["x"]) == [1.0, 2.0, 3.0, 5.0]
    assert list(frame["ecdf"]) == [0.25, 0.5, 0.75, 1.0]
    assert frame["fitted_cdf"].iloc[0] == 0.0
    assert frame["qq_theoretical"].is_monotonic_increasing


def test_fit_attributes_records_skipped_fits_as_notes():
    rng = np.random.default_rng(3)
    frame = pd.DataFrame({
        "CPM": rng.exponential(5.0, 60) + 0.1,
        "RPM": np.r_[np.zeros(55), rng.exponential(1.0, 5) + 0.1],
    })
    fits = fit_attributes(frame, ["CPM", "RPM"], workers=2)
    assert [f.attribute for f in fits] == ["CPM", "RPM"]
    assert fits[0].pareto is not None
    assert fits[0].exponential is not None
    assert fits[1].pareto is None
    assert any(note.startswith("pareto:") for note in fits[1].notes)
