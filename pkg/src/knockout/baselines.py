"""Imputation baselines and the input-dropout augmentation.

Every imputer is fitted on training data (respecting its observed mask)
and is the identity on complete rows. Values work in the same normalized
coordinates the models consume.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .schema import Categorical, FeatureSchema

__all__ = [
    "MeanMode",
    "ZeroIndicator",
    "KNN",
    "LinReg",
    "Imputer",
    "fit_imputer",
    "impute",
    "dropout_augment",
]


@dataclass
class MeanMode:
    """Per-feature mean (continuous) or mode (categorical) imputation."""

    fill_values: np.ndarray


@dataclass
class ZeroIndicator:
    """Zero-fill plus the mask appended as indicator features."""

    d: int


@dataclass
class KNN:
    """Average of the k nearest training rows over mutually observed coords."""

    k: int
    train_x: np.ndarray
    train_observed: np.ndarray  # 1 marks missing, same convention as masks
    fallback: np.ndarray  # per-feature means for degenerate neighborhoods

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class LinReg:
    """One least-squares model per feature, fitted on complete rows."""

    coefs: list[np.ndarray | None]  # per feature: (d,) intercept-last layout or None
    fallback: np.ndarray
    fell_back: list[int] = field(default_factory=list)


Imputer = MeanMode | ZeroIndicator | KNN | LinReg


def _column_fill_values(
    schema: FeatureSchema | None, x: np.ndarray, observed_mask: np.ndarray | None
) -> np.ndarray:
    d = x.shape[1]
    fills = np.empty(d)
    for j in range(d):
        col = x[:, j]
        if observed_mask is not None:
            col = col[observed_mask[:, j] == 0]
        if col.size == 0:
            raise ValueError(f"feature {j}: every entry is missing, cannot fit")
        kind = schema.kinds[j] if schema is not None else None
        if isinstance(kind, Categorical):
            values, counts = np.unique(col, return_counts=True)
            fills[j] = values[np.argmax(counts)]  # ties resolve to the lowest code
        else:
            fills[j] = col.mean()
    return fills


def fit_imputer(
    kind: str,
    x: np.ndarray,
    observed_mask: np.ndarray | None = None,
    schema: FeatureSchema | None = None,
    k: int = 5,
) -> Imputer:
    """Fit an imputer of the given kind ("mean_mode", "zero_indicator", "knn", "lin_reg")."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training data must be a nonempty matrix")
    d = x.shape[1]
    if observed_mask is None:
        observed_mask = np.zeros_like(x, dtype=np.uint8)
    observed_mask = np.asarray(observed_mask, dtype=np.uint8)

    if kind == "mean_mode":
        return MeanMode(_column_fill_values(schema, x, observed_mask))
    if kind == "zero_indicator":
        return ZeroIndicator(d)
    if kind == "knn":
        fallback = _column_fill_values(schema, x, observed_mask)
        return KNN(k=k, train_x=x.copy(), train_observed=observed_mask.copy(), fallback=fallback)
    if kind == "lin_reg":
        return _fit_lin_reg(x, observed_mask, schema)
    raise ValueError(f"unknown imputer kind {kind!r}")


def _fit_lin_reg(
    x: np.ndarray, observed_mask: np.ndarray, schema: FeatureSchema | None
) -> LinReg:
    d = x.shape[1]
    complete = x[(observed_mask == 0).all(axis=1)]
    fallback = _column_fill_values(schema, x, observed_mask)
    if complete.shape[0] < d:
        warnings.warn(
            f"only {complete.shape[0]} complete rows for {d} features; "
            "falling back to mean imputation for every feature",
            stacklevel=2,
        )
        return LinReg([None] * d, fallback, fell_back=list(range(d)))
    coefs: list[np.ndarray | None] = []
    fell_back = []
    for j in range(d):
        others = np.delete(complete, j, axis=1)
        design = np.hstack([others, np.ones((others.shape[0], 1))])
        target = complete[:, j]
        if np.linalg.matrix_rank(design) < design.shape[1]:
            warnings.warn(
                f"feature {j}: rank-deficient design, falling back to mean",
                stacklevel=2,
            )
            coefs.append(None)
            fell_back.append(j)
            continue
        beta, *_ = np.linalg.lstsq(design, target, rcond=None)
        coefs.append(beta)
    return LinReg(coefs, fallback, fell_back=fell_back)


def impute(imputer: Imputer, x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Fill the masked entries of a row or batch; observed entries pass through.

    A ZeroIndicator imputer widens the output to 2d by appending the mask.
    """
    x = np.asarray(x, dtype=float)
    mask = np.asarray(mask)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if mask.ndim == 1:
        mask = np.broadcast_to(mask, x.shape)
    if mask.shape != x.shape:
        raise ValueError(f"mask shape {mask.shape} does not match data shape {x.shape}")

    if isinstance(imputer, MeanMode):
        out = np.where(mask == 1, imputer.fill_values, x)
    elif isinstance(imputer, ZeroIndicator):
        filled = np.where(mask == 1, 0.0, x)
        out = np.hstack([filled, mask.astype(float)])
    elif isinstance(imputer, KNN):
        out = x.copy()
        for i in range(x.shape[0]):
            if mask[i].any():
                out[i] = _impute_knn_row(imputer, x[i], mask[i])
    elif isinstance(imputer, LinReg):
        out = x.copy()
        for i in range(x.shape[0]):
            if mask[i].any():
                out[i] = _impute_linreg_row(imputer, x[i], mask[i])
    else:
        raise TypeError(f"unknown imputer: {imputer!r}")
    return out[0] if single else out


def _impute_knn_row(imputer: KNN, row: np.ndarray, mask: np.ndarray) -> np.ndarray:
    both_observed = (mask == 0) & (imputer.train_observed == 0)
    counts = both_observed.sum(axis=1)
    diffs = np.where(both_observed, imputer.train_x - row, 0.0)
    with np.errstate(invalid="ignore"):
        dists = np.where(counts > 0, (diffs**2).sum(axis=1) / np.maximum(counts, 1), np.inf)
    if not np.isfinite(dists).any():
        return np.where(mask == 1, imputer.fallback, row)
    # Stable sort keeps the lowest row index first among ties.
    order = np.argsort(dists, kind="stable")[: imputer.k]
    out = row.copy()
    for j in np.flatnonzero(mask):
        donor_rows = [r for r in order if imputer.train_observed[r, j] == 0]
        if donor_rows:
            out[j] = imputer.train_x[donor_rows, j].mean()
        else:
            out[j] = imputer.fallback[j]
    return out


def _impute_linreg_row(imputer: LinReg, row: np.ndarray, mask: np.ndarray) -> np.ndarray:
    d = row.shape[0]
    # Missing covariates of a feature model are mean-filled first.
    base = np.where(mask == 1, imputer.fallback, row)
    out = row.copy()
    for j in np.flatnonzero(mask):
        beta = imputer.coefs[j]
        if beta is None:
            out[j] = imputer.fallback[j]
        else:
            others = np.delete(base, j)
            out[j] = float(others @ beta[:-1] + beta[-1])
    return out


def dropout_augment(x: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Zero each entry independently with the given probability, no rescaling."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must be in [0, 1], got {rate}")
    x = np.asarray(x, dtype=float)
    keep = rng.random(x.shape) >= rate
    return np.where(keep, x, 0.0)
