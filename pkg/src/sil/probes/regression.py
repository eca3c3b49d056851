"""Original vs extended rating regression with a paired item bootstrap.

Both models are ordinary least squares on standardized predictors: the
original uses the hand-coded features, the extended adds the encoder's
out-of-fold prediction as one more predictor. For each of B nonparametric
item resamples, both models are refit on the same resample and the
coefficient draws compared pairwise, giving per-predictor
p_shrink = P(|beta_extended| < |beta_original|), with exact ties counted
as one half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from ..seeding import rng_for

MAIN_EFFECTS = ("partitive", "strength", "mention", "subjecthood",
                "modification", "utterance_length")
CONTINUOUS = {"strength", "utterance_length", "nn_prediction"}
NN_PREDICTOR = "nn_prediction"


@dataclass
class RegressionSpec:
    main_effects: tuple = MAIN_EFFECTS
    interactions: list = field(default_factory=list)  # pairs of main effects
    standardize: bool = True
    include_nn: bool = True  # whether the extended model adds NN_PREDICTOR

    def __post_init__(self):
        names = list(self.main_effects)
        if len(set(names)) != len(names):
            raise ContractError("duplicate predictors in main_effects")
        for a, b in self.interactions:
            if a not in names or b not in names:
                raise ContractError(
                    f"interaction ({a}, {b}) references undeclared predictor")


@dataclass
class CoefficientRow:
    predictor: str
    beta_original: float
    beta_extended: float
    ci_original: tuple[float, float]
    ci_extended: tuple[float, float]
    p_shrink: float
    stars: str


@dataclass
class CoefficientComparison:
    rows: list[CoefficientRow]
    n_items: int
    n_bootstrap: int

    def row(self, predictor: str) -> CoefficientRow:
        for r in self.rows:
            if r.predictor == predictor:
                return r
        raise KeyError(predictor)


def _feature_value(record, name: str) -> float:
    f = record.features
    return {
        "partitive": f.partitive,
        "strength": f.determiner_strength,
        "mention": f.linguistic_mention,
        "subjecthood": f.subjecthood,
        "modification": f.modification,
        "utterance_length": f.utterance_length,
    }[name]


def _standardize_column(col: np.ndarray, name: str) -> np.ndarray:
    centered = col - col.mean()
    if name in CONTINUOUS:
        std = centered.std()
        if std > 0:
            centered = centered / std
    return centered


def build_design(records, spec: RegressionSpec, nn_predictions: dict | None
                 ) -> tuple[np.ndarray, list[str], np.ndarray]:
    """Design matrix (intercept first), column names, and raw-scale response.

    Continuous predictors are z-scored, binary ones centered; interaction
    columns are products of the transformed mains. The NN predictor, when
    given, is appended last and standardized like any continuous column.
    """
    if not records:
        raise ContractError("no records for regression")
    y = np.array([r.mean_rating for r in records], dtype=np.float64)
    columns: list[np.ndarray] = [np.ones(len(records))]
    names = ["intercept"]

    transformed: dict[str, np.ndarray] = {}
    for name in spec.main_effects:
        col = np.array([_feature_value(r, name) for r in records],
                       dtype=np.float64)
        transformed[name] = (_standardize_column(col, name)
                             if spec.standardize else col)
        columns.append(transformed[name])
        names.append(name)
    for a, b in spec.interactions:
        columns.append(transformed[a] * transformed[b])
        names.append(f"{a}:{b}")
    if nn_predictions is not None:
        missing = [r.id for r in records if r.id not in nn_predictions]
        if missing:
            raise ContractError(
                f"missing NN predictions for {len(missing)} records "
                f"(first: {missing[0]!r})")
        col = np.array([nn_predictions[r.id] for r in records],
                       dtype=np.float64)
        columns.append(_standardize_column(col, NN_PREDICTOR)
                       if spec.standardize else col)
        names.append(NN_PREDICTOR)
    return np.column_stack(columns), names, y


def _fit(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    # minimum-norm least squares; rank issues are checked on the original
    # design only, so a degenerate added column cannot abort the bootstrap
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return beta


def _check_full_rank(X: np.ndarray, names: list[str]) -> None:
    rank = np.linalg.matrix_rank(X)
    if rank >= X.shape[1]:
        return
    culprits = []
    for j in range(1, X.shape[1]):
        reduced = np.delete(X, j, axis=1)
        if np.linalg.matrix_rank(reduced) == rank:
            culprits.append(names[j])
    raise ContractError(
        "singular design matrix; collinear predictors: "
        + (", ".join(culprits) if culprits else "undetermined"))


def _stars(p: float) -> str:
    if p > 0.999:
        return "***"
    if p > 0.99:
        return "**"
    if p > 0.95:
        return "*"
    return ""


def regression_compare(records, nn_predictions: dict, spec: RegressionSpec,
                       B: int = 10000, seed: int = 0) -> CoefficientComparison:
    """Fit original and extended models and bootstrap coefficient shrinkage.

    With B=0 only the point fits are reported (CIs collapse to the point
    estimate, p_shrink is NaN).
    """
    X_orig, names_orig, y = build_design(records, spec, None)
    _check_full_rank(X_orig, names_orig)
    X_ext, names_ext, _ = build_design(
        records, spec, nn_predictions if spec.include_nn else None)

    beta_orig = _fit(X_orig, y)
    beta_ext = _fit(X_ext, y)

    n = len(records)
    if B > 0:
        rng = rng_for(seed, "regression-bootstrap")
        draws_orig = np.empty((B, len(names_orig)))
        draws_ext = np.empty((B, len(names_ext)))
        for b in range(B):
            idx = rng.integers(0, n, size=n)
            draws_orig[b] = _fit(X_orig[idx], y[idx])
            draws_ext[b] = _fit(X_ext[idx], y[idx])

    rows = []
    for j, name in enumerate(names_orig):
        b_o = float(beta_orig[j])
        b_e = float(beta_ext[j])
        if B > 0:
            o = draws_orig[:, j]
            e = draws_ext[:, j]
            ci_o = (float(np.quantile(o, 0.025)), float(np.quantile(o, 0.975)))
            ci_e = (float(np.quantile(e, 0.025)), float(np.quantile(e, 0.975)))
            shrunk = np.abs(e) < np.abs(o)
            ties = np.abs(e) == np.abs(o)
            p = float((shrunk.sum() + 0.5 * ties.sum()) / B)
        else:
            ci_o = (b_o, b_o)
            ci_e = (b_e, b_e)
            p = float("nan")
        rows.append(CoefficientRow(
            predictor=name, beta_original=b_o, beta_extended=b_e,
            ci_original=ci_o, ci_extended=ci_e, p_shrink=p,
            stars="" if math.isnan(p) else _stars(p)))

    if NN_PREDICTOR in names_ext:
        j = names_ext.index(NN_PREDICTOR)
        b_e = float(beta_ext[j])
        if B > 0:
            e = draws_ext[:, j]
            ci_e = (float(np.quantile(e, 0.025)), float(np.quantile(e, 0.975)))
        else:
            ci_e = (b_e, b_e)
        rows.append(CoefficientRow(
            predictor=NN_PREDICTOR, beta_original=float("nan"),
            beta_extended=b_e, ci_original=(float("nan"), float("nan")),
            ci_extended=ci_e, p_shrink=float("nan"), stars=""))

    return CoefficientComparison(rows=rows, n_items=n, n_bootstrap=B)
