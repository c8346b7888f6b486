"""
Distribution fitting for per-month attributes: log-normal, shifted exponential and
Pareto tails, each scored with the Kolmogorov-Smirnov statistic.

The three-parameter log-normal profiles the log-likelihood over the location
with a bounded Brent search below min(sample), widening the window while the
optimum sits on its lower edge. A fit whose location runs past 1000 times the
sample's magnitude is flagged degenerate instead of reported as a real optimum.

Documentation:
- scipy.stats.lognorm: https://docs.scipy.org/doc/scipy/reference/generated/scipy.stats.lognorm.html
- scipy.stats.kstest: https://docs.scipy.org/doc/scipy/reference/generated/scipy.stats.kstest.html
- scipy.optimize.minimize_scalar: https://docs.scipy.org/doc/scipy/reference/generated/scipy.optimize.minimize_scalar.html

Sample Input:
  fit_exponential([1.0, 2.0, 3.0])

Expected Output:
  DistributionFit(kind='exponential', shape=None, loc=1.0, scale=1.0, ks_statistic=0.333..., n=3, ...)
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field
from scipy import optimize, stats

from engagement_analytics.errors import DegenerateFit, EmptySample, InsufficientData, NonPositiveValue

DistributionKind = Literal["lognormal", "exponential", "pareto"]

MIN_LOGNORMAL_N = 10
MIN_PARETO_N = 10
DIVERGENCE_FACTOR = 1e3
HEAVY_TAIL_EXPONENT = 2.0


class DistributionFit(BaseModel):
    """Fitted parameters and KS statistic for one attribute."""

    kind: DistributionKind
    shape: Optional[float] = Field(None, description="s for lognormal, density exponent b for pareto.")
    loc: float
    scale: float = Field(..., gt=0.0)
    ks_statistic: float = Field(..., ge=0.0, le=1.0)
    n: int
    normalization: Optional[float] = Field(None, description="a in f(x) = a * x^-b (pareto only).")
    degenerate: bool = False
    heavy_tail: bool = False

    def frozen(self) -> Any:
        """The fitted scipy distribution."""
        if self.kind == "lognormal":
            return stats.lognorm(self.shape, loc=self.loc, scale=self.scale)
        if self.kind == "exponential":
            return stats.expon(loc=self.loc, scale=self.scale)
        return stats.pareto(float(self.shape) - 1.0, scale=self.scale)


def ks_statistic(sample: Sequence[float], cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """One-sample KS distance D between the empirical CDF and ``cdf``."""
    values = np.asarray(sample, dtype=float)
    if values.size == 0:
        raise EmptySample("KS statistic needs at least one observation")
    return float(stats.kstest(values, cdf).statistic)


def _profile_loglik(values: np.ndarray, loc: float) -> float:
    logs = np.log(values - loc)
    sigma = logs.std()
    if sigma <= 0.0:
        return -np.inf
    return float(-logs.sum() - values.size * np.log(sigma))


def _search_loc(values: np.ndarray) -> Tuple[float, bool]:
    low, high = float(values.min()), float(values.max())
    spread = high - low
    upper = low - 1e-9 * spread
    limit = DIVERGENCE_FACTOR * max(abs(high), abs(low), spread)
    width = spread

    while True:
        result = optimize.minimize_scalar(
            lambda loc: -_profile_loglik(values, loc),
            bounds=(low - width, upper),
            method="bounded",
            options={"xatol": 1e-10 * spread},
        )
        loc = float(result.x)
        if loc > low - width + 1e-3 * width:
            break
        if width > limit:
            return loc, True
        width *= 10.0

    # refine inside the bracket found above
    refined = optimize.minimize_scalar(
        lambda value: -_profile_loglik(values, value),
        bounds=(max(low - width, loc - 0.1 * width), upper),
        method="bounded",
        options={"xatol": 1e-12 * spread},
    )
    loc = float(refined.x) if -refined.fun >= _profile_loglik(values, loc) else loc
    return loc, abs(loc) > limit


def fit_lognormal(sample: Sequence[float]) -> DistributionFit:
    """
    Three-parameter log-normal fit by profile maximum likelihood.

    Given loc, ln(x - loc) is normal, so s and scale have closed forms; loc is
    chosen to maximize the resulting log-likelihood.

    Raises:
        InsufficientData: fewer than 10 observations or a constant sample
    """
    values = np.asarray(sample, dtype=float)
    if values.size < MIN_LOGNORMAL_N:
        raise InsufficientData(f"Log-normal fit needs at least {MIN_LOGNORMAL_N} values, got {values.size}")
    if np.ptp(values) == 0.0:
        raise InsufficientData("Log-normal fit is undefined for a constant sample")

    loc, degenerate = _search_loc(values)
    logs = np.log(values - loc)
    s, scale = float(logs.std()), float(np.exp(logs.mean()))
    d = ks_statistic(values, stats.lognorm(s, loc=loc, scale=scale).cdf)
    if degenerate:
        logger.warning(f"Log-normal location diverged (loc={loc:.2f}); fit flagged degenerate")
    return DistributionFit(kind="lognormal", shape=s, loc=loc, scale=scale, ks_statistic=d,
                           n=values.size, degenerate=degenerate)


def fit_exponential(sample: Sequence[float]) -> DistributionFit:
    """Shifted-exponential MLE: loc = min, scale = mean - min."""
    values = np.asarray(sample, dtype=float)
    if values.size < 2:
        raise InsufficientData(f"Exponential fit needs at least 2 values, got {values.size}")
    loc = float(values.min())
    scale = float(values.mean()) - loc
    if scale <= 0.0:
        raise DegenerateFit("Exponential scale is zero for a constant sample")
    d = ks_statistic(values, stats.expon(loc=loc, scale=scale).cdf)
    return DistributionFit(kind="exponential", loc=loc, scale=scale, ks_statistic=d, n=values.size)


def fit_pareto(sample: Sequence[float]) -> DistributionFit:
    """
    Pareto tail f(x) = a * x^-b above x_min = min(sample).

    The tail index comes from the Hill estimator n / sum(ln(x / x_min)); the
    density exponent is one more than the tail index.

    Raises:
        InsufficientData: fewer than 10 observations
        NonPositiveValue: min(sample) <= 0
        DegenerateFit: zero log-spread
    """
    values = np.asarray(sample, dtype=float)
    if values.size < MIN_PARETO_N:
        raise InsufficientData(f"Pareto fit needs at least {MIN_PARETO_N} values, got {values.size}")
    x_min = float(values.min())
    if x_min <= 0.0:
        raise NonPositiveValue("Pareto fit needs strictly positive values")
    spread = float(np.log(values / x_min).sum())
    if spread <= 0.0:
        raise DegenerateFit("Pareto exponent diverges for a constant sample")

    tail_index = values.size / spread
    b = 1.0 + tail_index
    fit = DistributionFit(
        kind="pareto",
        shape=b,
        loc=0.0,
        scale=x_min,
        ks_statistic=ks_statistic(values, stats.pareto(tail_index, scale=x_min).cdf),
        n=values.size,
        normalization=tail_index * x_min**tail_index,
        heavy_tail=b < HEAVY_TAIL_EXPONENT,
    )
    return fit


def emit_distribution_plotdata(sample: Sequence[float], fit: DistributionFit) -> pd.DataFrame:
    """
    Plot data for CDF and QQ figures, one row per sorted observation.

    Columns: x, ecdf, fitted_cdf, qq_theoretical.
    """
    values = np.sort(np.asarray(sample, dtype=float))
    if values.size == 0:
        raise EmptySample("Cannot emit plot data for an empty sample")
    n = values.size
    positions = np.arange(1, n + 1)
    distribution = fit.frozen()
    return pd.DataFrame({
        "x": values,
        "ecdf": positions / n,
        "fitted_cdf": distribution.cdf(values),
        "qq_theoretical": distribution.ppf((positions - 0.5) / n),
    })


class AttributeFits(BaseModel):
    attribute: str
    lognormal: Optional[DistributionFit] = None
    exponential: Optional[DistributionFit] = None
    pareto: Optional[DistributionFit] = None
    notes: List[str] = Field(default_factory=list)


def fit_attributes(frame: pd.DataFrame, attributes: Sequence[str], workers: int = 4) -> List[AttributeFits]:
    """Fit every distribution to each attribute column; failures become notes."""

    def fit_one(attribute: str) -> AttributeFits:
        values = frame[attribute].to_numpy(dtype=float)
        result = AttributeFits(attribute=attribute)
        fitters: Dict[str, Callable[[Sequence[float]], DistributionFit]] = {
            "lognormal": fit_lognormal,
            "exponential": fit_exponential,
            "pareto": fit_pareto,
        }
        for kind, fitter in fitters.items():
            sample = values[values > 0] if kind == "pareto" else values
            try:
                setattr(result, kind, fitter(sample))
            except (InsufficientData, DegenerateFit, NonPositiveValue) as e:
                logger.warning(f"{kind} fit of {attribute} skipped: {e}")
                result.notes.append(f"{kind}: {e}")
        return result

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(fit_one, attributes))
