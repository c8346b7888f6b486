"""
Exploratory factor analysis: adequacy screening, attribute selection, parallel
analysis, minres extraction with varimax rotation, fit indices, regression-method
factor scores and split-sample cross-validation.

Data enters as a pandas DataFrame whose columns are attribute labels. All
correlations are Pearson correlations of the raw per-month values.

Documentation:
- scipy.optimize.minimize (L-BFGS-B): https://docs.scipy.org/doc/scipy/reference/optimize.minimize-lbfgsb.html
- scipy.linalg: https://docs.scipy.org/doc/scipy/reference/linalg.html
- numpy random Generator: https://numpy.org/doc/stable/reference/random/generator.html

Sample Input:
  matrix = correlation_matrix(frame[["TI/m", "IC/m", "WT/m", "STR/m"]])
  model = fit_efa(matrix, k=2, n=len(frame))

Expected Output:
  FactorModel(attributes=['TI/m', 'IC/m', 'WT/m', 'STR/m'], k=2, factor_names=['MR1', 'MR2'], ...)
"""

import itertools
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field
from scipy import linalg, optimize, stats

from engagement_analytics.errors import (
    EverythingRemoved,
    InsufficientData,
    NonConvergence,
    SingularMatrix,
    TooFewRows,
    ZeroVariance,
)

MAX_CONDITION = 1e12
MIN_UNIQUENESS = 0.005
MINRES_TOL = 1e-6
MINRES_MAX_ITER = 1000
VARIMAX_MAX_ITER = 1000
MIN_PARALLEL_SIMS = 50
MIN_CROSS_VALIDATION_ROWS = 100

PES_MARKERS = ("WT/m", "STR/m")
AES_MARKERS = ("TI/m", "IC/m")


class CorrelationMatrix(BaseModel):
    """Labelled symmetric correlation matrix with unit diagonal."""

    labels: List[str]
    values: List[List[float]]

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    @classmethod
    def from_array(cls, labels: Sequence[str], values: np.ndarray) -> "CorrelationMatrix":
        return cls(labels=list(labels), values=values.tolist())


class AdequacyReport(BaseModel):
    """KMO/MSA, Bartlett sphericity and (when computed from data) VIF."""

    attributes: List[str]
    overall_kmo: Optional[float] = Field(None, description="None when KMO is not applicable (R = I).")
    per_variable_msa: Dict[str, Optional[float]]
    bartlett_chi2: float = Field(..., ge=0.0)
    bartlett_df: int
    bartlett_p: float
    vif: Dict[str, Optional[float]] = Field(
        default_factory=dict, description="None marks perfect collinearity (R^2 = 1)."
    )

    @property
    def kmo_applicable(self) -> bool:
        return self.overall_kmo is not None


class Removal(BaseModel):
    attribute: str
    criterion: Literal["msa", "vif", "perfect_collinearity"]
    value: Optional[float]


class SelectionResult(BaseModel):
    retained: List[str]
    removals: List[Removal]
    checkpoints: Dict[str, AdequacyReport] = Field(
        default_factory=dict, description="Adequacy on all attributes, after MSA removal, and on the final set."
    )


class ParallelAnalysisResult(BaseModel):
    suggested_factors: int
    observed_eigenvalues: List[float]
    simulated_mean_eigenvalues: List[float]
    n_sims: int
    seed: int


class FitIndices(BaseModel):
    chi2: float
    df: float
    tli: float
    rmsea: float
    srmr: float
    cfi: float


class FactorModel(BaseModel):
    """A fitted, rotated factor solution plus what is needed to score new data."""

    attributes: List[str]
    k: int
    n: int
    factor_names: List[str]
    unrotated_loadings: List[List[float]]
    rotated_loadings: List[List[float]]
    communalities: List[float]
    uniquenesses: List[float]
    complexity: List[float]
    ss_loadings: List[float]
    proportion_var: List[float]
    cumulative_var: List[float]
    fit: FitIndices
    score_weights: List[List[float]]
    heywood: List[str] = Field(default_factory=list, description="Attributes whose communality was clamped to 1.")
    means: Optional[List[float]] = None
    stds: Optional[List[float]] = None
    seed: Optional[int] = None

    @property
    def loadings(self) -> pd.DataFrame:
        return pd.DataFrame(self.rotated_loadings, index=self.attributes, columns=self.factor_names)


class EngagementScores(BaseModel):
    """Per-repository factor scores keyed by factor label (AES, PES, ...)."""

    index: List[str]
    scores: Dict[str, List[float]]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.scores, index=self.index)
        frame.index.name = "repository"
        return frame


class SubsetFit(BaseModel):
    n: int
    loadings: Dict[str, List[float]]
    fit: FitIndices


class CrossValReport(BaseModel):
    split_ratio: float
    train: SubsetFit
    test: SubsetFit
    seed: int
    stratified: bool = False


def correlation_matrix(frame: pd.DataFrame) -> CorrelationMatrix:
    """
    Pearson correlations between the columns of ``frame``.

    Raises:
        TooFewRows: fewer than p + 1 rows
        ZeroVariance: a constant column
    """
    n, p = frame.shape
    if n < p + 1:
        raise TooFewRows(f"Need at least {p + 1} rows for {p} attributes, got {n}")
    data = frame.to_numpy(dtype=float)
    for j, column in enumerate(frame.columns):
        if np.ptp(data[:, j]) == 0.0:
            raise ZeroVariance(str(column))
    values = np.corrcoef(data, rowvar=False)
    values = (values + values.T) / 2.0
    np.fill_diagonal(values, 1.0)
    return CorrelationMatrix.from_array([str(c) for c in frame.columns], values)


def _inverse(values: np.ndarray) -> np.ndarray:
    if np.linalg.cond(values) >= MAX_CONDITION:
        raise SingularMatrix("Correlation matrix is numerically singular")
    return linalg.inv(values)


def _smc(values: np.ndarray) -> np.ndarray:
    """Squared multiple correlations 1 - 1/diag(R^-1)."""
    return 1.0 - 1.0 / np.diag(_inverse(values))


def adequacy(
    matrix: CorrelationMatrix,
    n: int,
    vif_values: Optional[Dict[str, Optional[float]]] = None,
) -> AdequacyReport:
    """
    KMO with per-variable MSA from anti-image correlations, and Bartlett's test.

    Args:
        matrix: Correlation matrix of the attributes
        n: Number of observations behind the matrix
        vif_values: Optional VIF map to attach to the report

    Raises:
        SingularMatrix: condition number at or above 1e12
    """
    values = matrix.array
    p = values.shape[0]
    inverse = _inverse(values)
    scale = np.sqrt(np.outer(np.diag(inverse), np.diag(inverse)))
    partial = -inverse / scale

    r2 = values**2
    q2 = partial**2
    np.fill_diagonal(r2, 0.0)
    np.fill_diagonal(q2, 0.0)

    r_rows, q_rows = r2.sum(axis=0), q2.sum(axis=0)
    msa: Dict[str, Optional[float]] = {}
    for label, r_sum, q_sum in zip(matrix.labels, r_rows, q_rows):
        msa[label] = float(r_sum / (r_sum + q_sum)) if r_sum + q_sum > 0 else None
    total = r2.sum() + q2.sum()
    overall = float(r2.sum() / total) if total > 0 else None
    if overall is None:
        logger.warning("KMO not applicable: correlation matrix is the identity")

    _, logdet = np.linalg.slogdet(values)
    chi2 = max(-(n - 1 - (2 * p + 5) / 6.0) * logdet, 0.0)
    df = p * (p - 1) // 2
    return AdequacyReport(
        attributes=list(matrix.labels),
        overall_kmo=overall,
        per_variable_msa=msa,
        bartlett_chi2=chi2,
        bartlett_df=df,
        bartlett_p=float(stats.chi2.sf(chi2, df)) if df > 0 else 1.0,
        vif=dict(vif_values or {}),
    )


def vif(frame: pd.DataFrame) -> Dict[str, Optional[float]]:
    """
    Variance inflation factor per column, 1 / (1 - R^2) of each column on the rest.

    Perfectly collinear columns map to None.
    """
    n, p = frame.shape
    if n <= p:
        raise TooFewRows(f"VIF needs more rows than columns ({n} <= {p})")
    data = frame.to_numpy(dtype=float)
    result: Dict[str, Optional[float]] = {}
    for j, column in enumerate(frame.columns):
        target = data[:, j]
        if np.ptp(target) == 0.0:
            raise ZeroVariance(str(column))
        others = np.column_stack([np.ones(n), np.delete(data, j, axis=1)])
        coef, *_ = linalg.lstsq(others, target)
        residual = target - others @ coef
        centered = target - target.mean()
        r_squared = 1.0 - float(residual @ residual) / float(centered @ centered)
        if r_squared >= 1.0 - 1e-12:
            logger.warning(f"Perfect collinearity: {column} is a linear combination of the others")
            result[str(column)] = None
        else:
            result[str(column)] = 1.0 / (1.0 - r_squared)
    return result


def select_attributes(
    frame: pd.DataFrame,
    msa_threshold: float = 0.5,
    vif_threshold: float = 5.0,
) -> SelectionResult:
    """
    Drop attributes with low sampling adequacy, then multicollinear ones.

    Perfectly collinear attributes are dropped first since they make the
    correlation matrix singular. MSA pass: every attribute below the threshold
    is removed, then MSA is recomputed, until stable. The VIF pass works the
    same way: every attribute above the threshold goes at once.

    Raises:
        EverythingRemoved: fewer than three attributes survive
    """
    retained = [str(c) for c in frame.columns]
    removals: List[Removal] = []
    checkpoints: Dict[str, AdequacyReport] = {}
    n = len(frame)

    def check_size() -> None:
        if len(retained) < 3:
            raise EverythingRemoved(f"Only {len(retained)} attributes remain: {retained}")

    def drop_collinear() -> Dict[str, Optional[float]]:
        while True:
            factors = vif(frame[retained])
            collinear = [a for a, v in factors.items() if v is None]
            if not collinear:
                return factors
            # the last of a collinear set goes, so earlier columns survive
            attribute = collinear[-1]
            logger.info(f"Removing {attribute}: perfect collinearity")
            removals.append(Removal(attribute=attribute, criterion="perfect_collinearity", value=None))
            retained.remove(attribute)
            check_size()

    initial_vif = drop_collinear()
    checkpoints["initial"] = adequacy(correlation_matrix(frame[retained]), n, initial_vif)
    report = checkpoints["initial"]
    while True:
        low = [
            a for a in retained
            if report.per_variable_msa[a] is not None and report.per_variable_msa[a] < msa_threshold
        ]
        if not low:
            break
        for attribute in low:
            value = report.per_variable_msa[attribute]
            logger.info(f"Removing {attribute}: MSA {value:.3f} < {msa_threshold}")
            removals.append(Removal(attribute=attribute, criterion="msa", value=value))
            retained.remove(attribute)
        check_size()
        report = adequacy(correlation_matrix(frame[retained]), n)
    checkpoints["after_msa"] = adequacy(correlation_matrix(frame[retained]), n, vif(frame[retained]))

    while True:
        factors = vif(frame[retained])
        high = [a for a in retained if (factors[a] or 0.0) > vif_threshold]
        if not high:
            break
        for attribute in high:
            value = factors[attribute]
            logger.info(f"Removing {attribute}: VIF {value:.2f} > {vif_threshold}")
            removals.append(Removal(attribute=attribute, criterion="vif", value=value))
            retained.remove(attribute)
        check_size()

    checkpoints["final"] = adequacy(correlation_matrix(frame[retained]), n, vif(frame[retained]))
    return SelectionResult(retained=retained, removals=removals, checkpoints=checkpoints)


def _reduced_eigenvalues(values: np.ndarray) -> np.ndarray:
    reduced = values.copy()
    np.fill_diagonal(reduced, _smc(values))
    return np.sort(linalg.eigvalsh(reduced))[::-1]


def parallel_analysis(frame: pd.DataFrame, n_sims: int = 100, seed: int = 0) -> ParallelAnalysisResult:
    """
    Horn's parallel analysis on reduced (SMC-diagonal) correlation eigenvalues.

    The suggested count is the number of leading observed eigenvalues that
    exceed the mean eigenvalue of ``n_sims`` uncorrelated normal datasets of the
    same shape.
    """
    if n_sims < MIN_PARALLEL_SIMS:
        raise InsufficientData(f"Parallel analysis needs at least {MIN_PARALLEL_SIMS} simulations")
    observed = _reduced_eigenvalues(correlation_matrix(frame).array)
    n, p = frame.shape

    rng = np.random.Generator(np.random.PCG64(seed))
    simulated = np.empty((n_sims, p))
    for i in range(n_sims):
        noise = rng.standard_normal((n, p))
        simulated[i] = _reduced_eigenvalues(np.corrcoef(noise, rowvar=False))
    threshold = simulated.mean(axis=0)

    suggested = 0
    for value, reference in zip(observed, threshold):
        if value <= reference:
            break
        suggested += 1
    logger.info(f"Parallel analysis suggests {suggested} factor(s)")
    return ParallelAnalysisResult(
        suggested_factors=suggested,
        observed_eigenvalues=observed.tolist(),
        simulated_mean_eigenvalues=threshold.tolist(),
        n_sims=n_sims,
        seed=seed,
    )


def _loadings_for(psi: np.ndarray, values: np.ndarray, k: int) -> np.ndarray:
    reduced = values.copy()
    np.fill_diagonal(reduced, 1.0 - psi)
    eigenvalues, vectors = linalg.eigh(reduced)
    eigenvalues = eigenvalues[::-1][:k]
    vectors = vectors[:, ::-1][:, :k]
    return vectors * np.sqrt(np.maximum(eigenvalues, 0.0))


def _minres_objective(psi: np.ndarray, values: np.ndarray, k: int) -> float:
    loadings = _loadings_for(psi, values, k)
    residual = values - loadings @ loadings.T
    np.fill_diagonal(residual, 0.0)
    return float(np.sum(residual**2))


def _minres(values: np.ndarray, k: int) -> np.ndarray:
    start = np.clip(1.0 / np.diag(_inverse(values)), MIN_UNIQUENESS, 1.0)
    result = optimize.minimize(
        _minres_objective,
        start,
        args=(values, k),
        method="L-BFGS-B",
        bounds=[(MIN_UNIQUENESS, 1.0)] * values.shape[0],
        tol=MINRES_TOL,
        options={"maxiter": MINRES_MAX_ITER},
    )
    if not result.success:
        if result.nit >= MINRES_MAX_ITER:
            raise NonConvergence(f"Minres did not converge in {MINRES_MAX_ITER} iterations")
        logger.warning(f"Minres stopped early: {result.message}")
    return _loadings_for(result.x, values, k)


def varimax(loadings: np.ndarray, normalize: bool = True, tol: float = 1e-8) -> np.ndarray:
    """Orthogonal varimax rotation, with Kaiser row normalization by default."""
    p, k = loadings.shape
    if k < 2:
        return loadings.copy()
    norms = np.sqrt(np.sum(loadings**2, axis=1)) if normalize else np.ones(p)
    norms = np.where(norms > 0.0, norms, 1.0)
    x = loadings / norms[:, None]

    rotation = np.eye(k)
    criterion = 0.0
    for _ in range(VARIMAX_MAX_ITER):
        basis = x @ rotation
        target = x.T @ (basis**3 - basis @ np.diag(np.sum(basis**2, axis=0)) / p)
        u, s, vt = linalg.svd(target)
        rotation = u @ vt
        previous, criterion = criterion, float(np.sum(s))
        if criterion < previous * (1.0 + tol):
            break
    return (x @ rotation) * norms[:, None]


def _orient(loadings: np.ndarray) -> np.ndarray:
    """Order factors by explained variance and make each largest loading positive."""
    order = np.argsort(-np.sum(loadings**2, axis=0), kind="stable")
    loadings = loadings[:, order]
    for j in range(loadings.shape[1]):
        if loadings[np.argmax(np.abs(loadings[:, j])), j] < 0.0:
            loadings[:, j] = -loadings[:, j]
    return loadings


def _fit_indices(values: np.ndarray, loadings: np.ndarray, uniquenesses: np.ndarray, n: int) -> FitIndices:
    p, k = loadings.shape
    implied = loadings @ loadings.T + np.diag(uniquenesses)
    residual = values - implied
    lower = residual[np.tril_indices(p, -1)]
    srmr = float(np.sqrt(np.mean(lower**2))) if lower.size else 0.0

    df = ((p - k) ** 2 - (p + k)) / 2.0
    _, logdet_r = np.linalg.slogdet(values)
    _, logdet_s = np.linalg.slogdet(implied)
    f_min = float(np.trace(values @ linalg.inv(implied)) - logdet_r + logdet_s - p)
    chi2 = max((n - 1 - (2 * p + 5) / 6.0 - 2 * k / 3.0) * f_min, 0.0)
    null_df = p * (p - 1) / 2.0
    null_chi2 = max(-(n - 1 - (2 * p + 5) / 6.0) * logdet_r, 0.0)

    if df <= 0:
        logger.warning(f"Model with {k} factors on {p} attributes has df={df:g}; fit indices are saturated")
        return FitIndices(chi2=chi2, df=df, tli=1.0, rmsea=0.0, srmr=srmr, cfi=1.0)

    null_ratio = null_chi2 / null_df
    tli = (null_ratio - chi2 / df) / (null_ratio - 1.0) if null_ratio != 1.0 else 1.0
    rmsea = float(np.sqrt(max(chi2 - df, 0.0) / (df * (n - 1))))
    denominator = max(null_chi2 - null_df, chi2 - df, 0.0)
    cfi = 1.0 - max(chi2 - df, 0.0) / denominator if denominator > 0 else 1.0
    return FitIndices(chi2=chi2, df=df, tli=float(tli), rmsea=rmsea, srmr=srmr, cfi=float(cfi))


def fit_efa(matrix: CorrelationMatrix, k: int, n: int) -> FactorModel:
    """
    Minres extraction of ``k`` factors followed by varimax rotation.

    Args:
        matrix: Correlation matrix of the retained attributes
        k: Number of factors
        n: Number of observations behind the matrix

    Returns:
        The rotated model; communalities above 1 are clamped and listed in ``heywood``

    Raises:
        NonConvergence: minres exhausted its iterations
        SingularMatrix: the matrix cannot be inverted
    """
    values = matrix.array
    p = values.shape[0]
    if k < 1 or k >= p:
        raise InsufficientData(f"Cannot extract {k} factors from {p} attributes")

    unrotated = _minres(values, k)
    heywood: List[str] = []
    row_norms = np.sqrt(np.sum(unrotated**2, axis=1))
    for i, norm in enumerate(row_norms):
        if norm**2 > 1.0:
            logger.warning(f"Heywood case: communality of {matrix.labels[i]} is {norm**2:.4f}, clamped to 1")
            heywood.append(matrix.labels[i])
            unrotated[i] /= norm

    unrotated = _orient(unrotated)
    rotated = _orient(varimax(unrotated))
    communalities = np.sum(rotated**2, axis=1)
    uniquenesses = 1.0 - communalities
    squares = rotated**2
    fourth = np.sum(squares**2, axis=1)
    complexity = np.where(fourth > 0.0, communalities**2 / np.where(fourth > 0.0, fourth, 1.0), 1.0)
    ss_loadings = np.sum(squares, axis=0)
    proportion = ss_loadings / p

    model = FactorModel(
        attributes=list(matrix.labels),
        k=k,
        n=n,
        factor_names=[f"MR{j + 1}" for j in range(k)],
        unrotated_loadings=unrotated.tolist(),
        rotated_loadings=rotated.tolist(),
        communalities=communalities.tolist(),
        uniquenesses=uniquenesses.tolist(),
        complexity=complexity.tolist(),
        ss_loadings=ss_loadings.tolist(),
        proportion_var=proportion.tolist(),
        cumulative_var=np.cumsum(proportion).tolist(),
        fit=_fit_indices(values, rotated, np.maximum(uniquenesses, MIN_UNIQUENESS), n),
        score_weights=linalg.solve(values, rotated, assume_a="sym").tolist(),
        heywood=heywood,
    )
    logger.info(
        f"EFA k={k}: TLI={model.fit.tli:.3f} RMSEA={model.fit.rmsea:.3f} SRMR={model.fit.srmr:.3f}"
    )
    return model


def factor_labels(model: FactorModel) -> List[str]:
    """
    Name factors by their constituents: PES where WT/m (or STR/m) loads most,
    AES where TI/m (or IC/m) loads most. Other factors keep their MR name.
    """
    loadings = np.abs(np.asarray(model.rotated_loadings))
    labels = list(model.factor_names)

    def owner(markers: Tuple[str, ...], taken: Optional[int]) -> Optional[int]:
        for marker in markers:
            if marker in model.attributes:
                row = loadings[model.attributes.index(marker)].copy()
                if taken is not None and model.k > 1:
                    row[taken] = -1.0
                return int(np.argmax(row))
        return None

    pes = owner(PES_MARKERS, None)
    aes = owner(AES_MARKERS, pes)
    if pes is not None:
        labels[pes] = "PES"
    if aes is not None and aes != pes:
        labels[aes] = "AES"
    return labels


def factor_scores(frame: pd.DataFrame, model: FactorModel) -> EngagementScores:
    """
    Regression-method factor scores Z @ R^-1 @ L.

    Z standardizes with the model's stored means and standard deviations when
    present, otherwise with the frame's own.
    """
    data = frame[model.attributes].to_numpy(dtype=float)
    means = np.asarray(model.means) if model.means is not None else data.mean(axis=0)
    stds = np.asarray(model.stds) if model.stds is not None else data.std(axis=0, ddof=1)
    if np.any(stds == 0.0):
        raise SingularMatrix("Cannot standardize a zero-variance attribute")
    scores = ((data - means) / stds) @ np.asarray(model.score_weights)
    labels = factor_labels(model)
    return EngagementScores(
        index=[str(i) for i in frame.index],
        scores={label: scores[:, j].tolist() for j, label in enumerate(labels)},
    )


def fit_from_frame(frame: pd.DataFrame, k: int, seed: Optional[int] = None) -> FactorModel:
    """Fit on ``frame`` and record its standardization so the model can score new data."""
    model = fit_efa(correlation_matrix(frame), k, len(frame))
    data = frame.to_numpy(dtype=float)
    return model.model_copy(update={
        "means": data.mean(axis=0).tolist(),
        "stds": data.std(axis=0, ddof=1).tolist(),
        "seed": seed,
    })


def _align(loadings: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Permute and sign-flip factors to maximize congruence with ``reference``."""
    k = reference.shape[1]
    norms = np.linalg.norm(loadings, axis=0) * np.linalg.norm(reference, axis=0)[:, None]
    congruence = (reference.T @ loadings) / np.where(norms > 0, norms, 1.0)
    best = max(
        itertools.permutations(range(k)),
        key=lambda perm: sum(abs(congruence[j, perm[j]]) for j in range(k)),
    )
    aligned = loadings[:, list(best)]
    for j in range(k):
        if congruence[j, best[j]] < 0:
            aligned[:, j] = -aligned[:, j]
    return aligned


def split_indices(
    n: int,
    ratio: float,
    seed: int,
    strata: Optional[Sequence[object]] = None,
    train_size: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Random train/test split of ``range(n)``.

    ``train_size`` fixes the training-set size exactly. With ``strata`` each
    stratum is split separately and its training share rounded.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    if strata is None:
        size = train_size if train_size is not None else int(round(ratio * n))
        order = rng.permutation(n)
        return np.sort(order[:size]), np.sort(order[size:])

    labels = np.asarray(strata)
    train: List[np.ndarray] = []
    test: List[np.ndarray] = []
    for value in sorted(set(labels.tolist()), key=str):
        members = rng.permutation(np.flatnonzero(labels == value))
        size = int(round(ratio * members.size))
        train.append(members[:size])
        test.append(members[size:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def cross_validate(
    frame: pd.DataFrame,
    reference: FactorModel,
    ratio: float = 0.7,
    seed: int = 0,
    strata: Optional[Sequence[object]] = None,
    train_size: Optional[int] = None,
) -> CrossValReport:
    """
    Refit the reference model's attributes and k on a random split.

    Factor order and signs in each subset are aligned with ``reference``.

    Raises:
        InsufficientData: fewer than 100 rows
    """
    n = len(frame)
    if n < MIN_CROSS_VALIDATION_ROWS:
        raise InsufficientData(f"Cross-validation needs at least {MIN_CROSS_VALIDATION_ROWS} rows, got {n}")
    data = frame[reference.attributes]
    train_rows, test_rows = split_indices(n, ratio, seed, strata, train_size)
    target = np.asarray(reference.rotated_loadings)

    def subset(rows: np.ndarray) -> SubsetFit:
        part = data.iloc[rows]
        model = fit_efa(correlation_matrix(part), reference.k, len(part))
        aligned = _align(np.asarray(model.rotated_loadings), target)
        return SubsetFit(
            n=len(part),
            loadings={a: aligned[i].tolist() for i, a in enumerate(reference.attributes)},
            fit=model.fit,
        )

    report = CrossValReport(
        split_ratio=ratio,
        train=subset(train_rows),
        test=subset(test_rows),
        seed=seed,
        stratified=strata is not None,
    )
    logger.info(f"Cross-validation split {report.train.n}/{report.test.n} (seed {seed})")
    return report


def save_model(model: FactorModel, path: Path) -> None:
    """Persist a fitted model as JSON."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.model_dump_json(indent=2), encoding="utf-8")


def load_model(path: Path) -> FactorModel:
    return FactorModel.model_validate_json(path.read_text(encoding="utf-8"))
