"""Bagged regression forest over feature differences.

Each tree is an sklearn variance-reduction tree grown on its own resample with ``mtry``
candidate features per split; fitted trees are kept as plain node arrays.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.tree import DecisionTreeRegressor

from ..errors import DataError
from ..match_prob import INTENSITY_FLOOR
from ..models import FeatureDiffRow
from . import poisson_nll, training_arrays, training_groups
from .folds import kfold_indices, n_groups
from .trees import TreeArrays

logger = logging.getLogger(__name__)

MTRY_GRID: tuple[int, ...] = (1, 2, 3, 4)

Sampling = Literal["bootstrap", "subsample"]


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[TreeArrays, ...]
    mtry: int
    min_leaf: int
    seed: int
    sampling: str = "bootstrap"
    sample_fraction: float = 0.632

    def tree_predictions(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.vstack([tree.predict(X) for tree in self.trees])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.maximum(self.tree_predictions(X).mean(axis=0), INTENSITY_FLOOR)


def _draw_sample(
    n: int, rng: np.random.Generator, sampling: Sampling, sample_fraction: float
) -> np.ndarray:
    if sampling == "bootstrap":
        return rng.integers(0, n, size=n)
    size = min(n, max(1, math.ceil(sample_fraction * n)))
    return rng.choice(n, size=size, replace=False)


def _grow_tree(
    X: np.ndarray, y: np.ndarray, mtry: int, min_leaf: int, seed_seq: np.random.SeedSequence,
    sampling: Sampling, sample_fraction: float,
) -> TreeArrays:
    rng = np.random.default_rng(seed_seq)
    sample = _draw_sample(len(y), rng, sampling, sample_fraction)
    tree = DecisionTreeRegressor(
        max_features=mtry,
        min_samples_leaf=min_leaf,
        random_state=int(rng.integers(0, 2**31 - 1)),
    )
    tree.fit(X[sample], y[sample])
    return TreeArrays.from_sklearn(tree)


def fit_forest(
    data: Sequence[FeatureDiffRow] | np.ndarray,
    mtry: int,
    trees: int,
    seed: int,
    y: Optional[np.ndarray] = None,
    min_leaf: int = 5,
    sampling: Sampling = "bootstrap",
    sample_fraction: float = 0.632,
    threads: int = 1,
) -> ForestModel:
    X, y = training_arrays(data, y)
    if trees <= 0:
        raise DataError(f"a forest needs at least one tree, got {trees}")
    if not 1 <= mtry <= X.shape[1]:
        raise DataError(f"mtry must lie in [1, {X.shape[1]}], got {mtry}")
    if not 0 < sample_fraction <= 1:
        raise DataError(f"sample_fraction must lie in (0, 1], got {sample_fraction}")

    children = np.random.SeedSequence(seed).spawn(trees)
    grown = Parallel(n_jobs=threads)(
        delayed(_grow_tree)(X, y, mtry, min_leaf, child, sampling, sample_fraction)
        for child in children
    )
    logger.debug("grew %d trees (mtry=%d, min_leaf=%d)", trees, mtry, min_leaf)
    return ForestModel(
        trees=tuple(grown), mtry=mtry, min_leaf=min_leaf, seed=seed,
        sampling=sampling, sample_fraction=sample_fraction,
    )


@dataclass(frozen=True)
class ForestTuningEntry:
    mtry: int
    cv_nll: float


def cross_validate_forest(
    data: Sequence[FeatureDiffRow] | np.ndarray,
    y: Optional[np.ndarray] = None,
    grid: Sequence[int] = MTRY_GRID,
    folds: int = 10,
    trees: int = 500,
    seed: int = 0,
    min_leaf: int = 5,
    threads: int = 1,
    groups: Optional[np.ndarray] = None,
) -> list[ForestTuningEntry]:
    groups = training_groups(data, y, groups)
    X, y = training_arrays(data, y)
    splits = kfold_indices(len(y), min(folds, n_groups(len(y), groups)), seed, groups)
    report = []
    for mtry in grid:
        losses = []
        for fold, (train, test) in enumerate(splits):
            model = fit_forest(
                X[train], mtry, trees, seed=seed + fold, y=y[train], min_leaf=min_leaf,
                threads=threads,
            )
            losses.append(poisson_nll(y[test], model.predict(X[test])) * len(test))
        entry = ForestTuningEntry(mtry=mtry, cv_nll=float(np.sum(losses) / len(y)))
        logger.info("forest cv: mtry=%d nll=%.5f", entry.mtry, entry.cv_nll)
        report.append(entry)
    return report


def tune_forest(
    data: Sequence[FeatureDiffRow] | np.ndarray,
    y: Optional[np.ndarray] = None,
    folds: int = 10,
    trees: int = 500,
    seed: int = 0,
    threads: int = 1,
    groups: Optional[np.ndarray] = None,
) -> int:
    report = cross_validate_forest(
        data, y, folds=folds, trees=trees, seed=seed, threads=threads, groups=groups
    )
    return min(report, key=lambda e: (e.cv_nll, e.mtry)).mtry
