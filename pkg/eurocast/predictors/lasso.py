"""L1-penalised Poisson regression fitted by coordinate descent on IRLS quadratics.

Features are standardised inside the fit; the penalty ξ multiplies Σ|β_k| of the
standardised slopes against the summed log-likelihood, and coefficients are reported on
the original feature scale.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from ..errors import ConvergenceError, DataError
from ..models import FEATURE_NAMES, FeatureDiffRow
from .folds import kfold_indices, n_groups, usable_folds
from . import clip_eta, mean_poisson_deviance, training_arrays, training_groups

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LassoPoissonModel:
    intercept: float
    coefficients: np.ndarray
    penalty: float
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES
    objective_trace: tuple[float, ...] = field(default=(), repr=False)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.exp(clip_eta(self.intercept + X @ self.coefficients))

    def coefficient_table(self) -> dict[str, float]:
        return dict(zip(self.feature_names, (float(c) for c in self.coefficients)))


def _standardise(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return (X - mean) / scale, mean, scale


def _objective(Z: np.ndarray, y: np.ndarray, b0: float, beta: np.ndarray, penalty: float) -> float:
    eta = clip_eta(b0 + Z @ beta)
    return float(np.sum(np.exp(eta) - y * eta) + penalty * np.abs(beta).sum())


def _soft_threshold(value: float, penalty: float) -> float:
    if value > penalty:
        return value - penalty
    if value < -penalty:
        return value + penalty
    return 0.0


def _weighted_lasso(
    Z: np.ndarray, z: np.ndarray, w: np.ndarray, b0: float, beta: np.ndarray, penalty: float,
    active: np.ndarray, tol: float, max_sweeps: int,
) -> tuple[float, np.ndarray]:
    """Coordinate descent on ``½ Σ w (z − b0 − Zβ)² + ξ Σ|β|``."""
    beta = beta.copy()
    resid = z - b0 - Z @ beta
    curvature = (w[:, None] * Z**2).sum(axis=0)
    w_sum = w.sum()
    for _ in range(max_sweeps):
        shift = float(w @ resid) / w_sum
        b0 += shift
        resid -= shift
        max_change = abs(shift)
        for k in np.flatnonzero(active):
            if curvature[k] <= 0:
                continue
            old = beta[k]
            rho = float((w * Z[:, k]) @ resid) + curvature[k] * old
            beta[k] = _soft_threshold(rho, penalty) / curvature[k]
            if beta[k] != old:
                resid -= Z[:, k] * (beta[k] - old)
                max_change = max(max_change, abs(beta[k] - old))
        if max_change < tol:
            break
    return b0, beta


def _fit_standardised(
    Z: np.ndarray, y: np.ndarray, penalty: float, start: Optional[tuple[float, np.ndarray]] = None,
    tol: float = 1e-10, max_iter: int = 100,
) -> tuple[float, np.ndarray, list[float]]:
    mean_y = float(y.mean())
    if mean_y <= 0:
        raise DataError("all responses are zero; the Poisson intercept is not identified")
    active = Z.std(axis=0) > 0
    if start is None:
        b0, beta = np.log(mean_y), np.zeros(Z.shape[1])
    else:
        b0, beta = start[0], start[1].copy()

    trace = [_objective(Z, y, b0, beta, penalty)]
    for _ in range(max_iter):
        eta = clip_eta(b0 + Z @ beta)
        mu = np.exp(eta)
        z = eta + (y - mu) / mu
        cand_b0, cand_beta = _weighted_lasso(
            Z, z, mu, b0, beta, penalty, active, tol=tol * 1e-3, max_sweeps=10_000
        )
        # step-halving keeps the penalised objective monotone
        step, current = 1.0, trace[-1]
        while True:
            new_b0 = b0 + step * (cand_b0 - b0)
            new_beta = beta + step * (cand_beta - beta)
            value = _objective(Z, y, new_b0, new_beta, penalty)
            if value <= current + 1e-12 * abs(current) or step < 1e-10:
                break
            step /= 2.0
        change = max(abs(new_b0 - b0), float(np.max(np.abs(new_beta - beta), initial=0.0)))
        b0, beta = new_b0, new_beta
        trace.append(value)
        if change < tol:
            return b0, beta, trace
    raise ConvergenceError(
        f"lasso did not converge in {max_iter} iterations (penalty {penalty:g})", trace=trace
    )


def fit_lasso(
    data: Sequence[FeatureDiffRow] | np.ndarray,
    penalty: float,
    y: Optional[np.ndarray] = None,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> LassoPoissonModel:
    if penalty < 0:
        raise DataError(f"penalty must be non-negative, got {penalty}")
    X, y = training_arrays(data, y)
    if X.shape[0] < 2:
        raise DataError("the lasso needs at least two rows")
    Z, mean, scale = _standardise(X)
    b0, beta, trace = _fit_standardised(Z, y, penalty, tol=tol, max_iter=max_iter)
    coefficients = beta / scale
    return LassoPoissonModel(
        intercept=float(b0 - coefficients @ mean),
        coefficients=coefficients,
        penalty=float(penalty),
        feature_mean=mean,
        feature_scale=scale,
        objective_trace=tuple(trace),
    )


def max_penalty(X: np.ndarray, y: np.ndarray) -> float:
    """Smallest ξ at which every standardised slope is zero."""
    Z, _, _ = _standardise(X)
    return float(np.max(np.abs(Z.T @ (y - y.mean())), initial=0.0))


@dataclass(frozen=True)
class LassoTuning:
    penalty: float
    grid: np.ndarray
    cv_mean: np.ndarray
    cv_se: np.ndarray
    folds: int
    rule: str


def _fold_path(
    X: np.ndarray, y: np.ndarray, train: np.ndarray, test: np.ndarray, grid: np.ndarray
) -> np.ndarray:
    Z, mean, scale = _standardise(X[train])
    Z_test = (X[test] - mean) / scale
    out = np.empty(len(grid))
    start = None
    for i, penalty in enumerate(grid):
        b0, beta, _ = _fit_standardised(Z, y[train], penalty, start=start)
        start = (b0, beta)
        out[i] = mean_poisson_deviance(y[test], np.exp(clip_eta(b0 + Z_test @ beta)))
    return out


def cross_validate_lasso(
    data: Sequence[FeatureDiffRow] | np.ndarray,
    y: Optional[np.ndarray] = None,
    folds: int = 10,
    seed: int = 0,
    n_penalties: int = 50,
    min_ratio: float = 1e-3,
    rule: Literal["min", "1se"] = "min",
    threads: int = 1,
    groups: Optional[np.ndarray] = None,
) -> LassoTuning:
    groups = training_groups(data, y, groups)
    X, y = training_arrays(data, y)
    matches = n_groups(len(y), groups)
    if matches < folds:
        raise DataError(f"{matches} matches cannot be split into {folds} folds")
    top = max_penalty(X, y)
    if top <= 0:
        grid = np.array([0.0])
        return LassoTuning(0.0, grid, np.zeros(1), np.zeros(1), 0, rule)
    grid = np.geomspace(top, top * min_ratio, n_penalties)

    k = usable_folds(y, folds, seed, groups=groups)
    if k == 0:
        logger.warning("every fold split leaves constant responses; using the largest penalty")
        return LassoTuning(top, grid, np.full(len(grid), np.nan), np.full(len(grid), np.nan), 0, rule)

    splits = kfold_indices(len(y), k, seed, groups)
    paths = Parallel(n_jobs=threads)(
        delayed(_fold_path)(X, y, train, test, grid) for train, test in splits
    )
    scores = np.vstack(paths)
    cv_mean = scores.mean(axis=0)
    cv_se = scores.std(axis=0, ddof=1) / np.sqrt(k) if k > 1 else np.zeros(len(grid))
    best = int(np.argmin(cv_mean))
    if rule == "1se":
        # grid runs from large to small penalties, so the first admissible index is the largest
        best = int(np.flatnonzero(cv_mean <= cv_mean[best] + cv_se[best])[0])
    logger.info("lasso cv over %d penalties, %d folds: penalty %.4g", len(grid), k, grid[best])
    return LassoTuning(float(grid[best]), grid, cv_mean, cv_se, k, rule)


def tune_lasso(
    data: Sequence[FeatureDiffRow] | np.ndarray,
    folds: int = 10,
    y: Optional[np.ndarray] = None,
    seed: int = 0,
    rule: Literal["min", "1se"] = "min",
    threads: int = 1,
    groups: Optional[np.ndarray] = None,
) -> float:
    return cross_validate_lasso(
        data, y, folds=folds, seed=seed, rule=rule, threads=threads, groups=groups
    ).penalty
