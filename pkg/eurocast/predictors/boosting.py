"""Second-order gradient boosting on the Poisson deviance in log-intensity space.

Trees are grown by exact greedy split search on the gradient/hessian sums, with the
usual regularised gain ``½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)] − γ`` and leaf weight
``−G/(H+λ)``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field

from ..errors import DataError, NumericalError
from ..models import FeatureDiffRow
from . import (
    clip_eta,
    mean_poisson_deviance,
    poisson_deviance,
    training_arrays,
    training_groups,
)
from .folds import kfold_indices, n_groups
from .trees import LEAF, TreeArrays

logger = logging.getLogger(__name__)

EXPLOSION_LIMIT = 100.0


@dataclass(frozen=True)
class BoostedModel:
    base_score: float
    trees: tuple[TreeArrays, ...]
    learning_rate: float
    leaf_count_penalty: float
    l2_leaf_penalty: float
    max_depth: int
    min_child_weight: float = 1.0
    max_delta_step: Optional[float] = 0.7
    loss: str = "poisson_deviance"
    deviance_trace: tuple[float, ...] = field(default=(), repr=False)

    @property
    def rounds(self) -> int:
        return len(self.trees)

    def decision_function(self, X: np.ndarray, rounds: Optional[int] = None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        f = np.full(X.shape[0], self.base_score)
        for tree in self.trees[:rounds]:
            f += self.learning_rate * tree.predict(X)
        return f

    def predict(self, X: np.ndarray, rounds: Optional[int] = None) -> np.ndarray:
        return np.exp(clip_eta(self.decision_function(X, rounds)))

    def staged_predict(self, X: np.ndarray, rounds: Sequence[int]) -> dict[int, np.ndarray]:
        """Intensities after each requested number of rounds."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        wanted = set(rounds)
        out: dict[int, np.ndarray] = {}
        f = np.full(X.shape[0], self.base_score)
        if 0 in wanted:
            out[0] = np.exp(clip_eta(f))
        for k, tree in enumerate(self.trees, start=1):
            f = f + self.learning_rate * tree.predict(X)
            if k in wanted:
                out[k] = np.exp(clip_eta(f))
        return out


class _TreeBuilder:
    def __init__(
        self, X: np.ndarray, grad: np.ndarray, hess: np.ndarray, max_depth: int, l2: float,
        gamma: float, min_child_weight: float, max_delta_step: Optional[float],
    ) -> None:
        self.X, self.grad, self.hess = X, grad, hess
        self.max_depth, self.l2, self.gamma = max_depth, l2, gamma
        self.min_child_weight, self.max_delta_step = min_child_weight, max_delta_step
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _new_node(self) -> int:
        for column in (self.feature, self.left, self.right):
            column.append(LEAF)
        self.threshold.append(0.0)
        self.value.append(0.0)
        return len(self.feature) - 1

    def leaf_weight(self, G: float, H: float) -> float:
        weight = -G / (H + self.l2)
        if self.max_delta_step is not None:
            weight = float(np.clip(weight, -self.max_delta_step, self.max_delta_step))
        return weight

    def best_split(self, rows: np.ndarray) -> Optional[tuple[float, int, float]]:
        g, h = self.grad[rows], self.hess[rows]
        G, H = g.sum(), h.sum()
        parent = G * G / (H + self.l2)
        best: Optional[tuple[float, int, float]] = None
        for k in range(self.X.shape[1]):
            x = self.X[rows, k]
            order = np.argsort(x, kind="mergesort")
            xs = x[order]
            GL = np.cumsum(g[order])[:-1]
            HL = np.cumsum(h[order])[:-1]
            GR, HR = G - GL, H - HL
            valid = (xs[1:] > xs[:-1]) & (HL >= self.min_child_weight) & (HR >= self.min_child_weight)
            if not valid.any():
                continue
            gain = 0.5 * (GL**2 / (HL + self.l2) + GR**2 / (HR + self.l2) - parent) - self.gamma
            gain = np.where(valid, gain, -np.inf)
            i = int(np.argmax(gain))
            if gain[i] > 0 and (best is None or gain[i] > best[0]):
                best = (float(gain[i]), k, float(0.5 * (xs[i] + xs[i + 1])))
        return best

    def grow(self, rows: np.ndarray, depth: int = 0) -> int:
        node = self._new_node()
        split = self.best_split(rows) if depth < self.max_depth else None
        if split is None:
            self.value[node] = self.leaf_weight(self.grad[rows].sum(), self.hess[rows].sum())
            return node
        _, k, threshold = split
        goes_left = self.X[rows, k] <= threshold
        self.feature[node] = k
        self.threshold[node] = threshold
        self.left[node] = self.grow(rows[goes_left], depth + 1)
        self.right[node] = self.grow(rows[~goes_left], depth + 1)
        return node

    def build(self) -> TreeArrays:
        self.grow(np.arange(self.X.shape[0]))
        return TreeArrays.from_lists(self.feature, self.threshold, self.left, self.right, self.value)


def fit_boosted(
    data: Sequence[FeatureDiffRow] | np.ndarray,
    rounds: int,
    learning_rate: float = 0.1,
    leaf_count_penalty: float = 0.0,
    l2_leaf_penalty: float = 1.0,
    max_depth: int = 3,
    y: Optional[np.ndarray] = None,
    min_child_weight: float = 1.0,
    max_delta_step: Optional[float] = 0.7,
) -> BoostedModel:
    X, y = training_arrays(data, y)
    if rounds < 0:
        raise DataError(f"rounds must be non-negative, got {rounds}")
    if learning_rate < 0:
        raise DataError(f"learning_rate must be non-negative, got {learning_rate}")
    mean_y = float(y.mean())
    if mean_y <= 0:
        raise DataError("all responses are zero; the boosting base score is not identified")

    base = float(np.log(mean_y))
    f = np.full(len(y), base)
    trees: list[TreeArrays] = []
    trace = [poisson_deviance(y, np.exp(f))]
    for k in range(rounds):
        mu = np.exp(f)
        builder = _TreeBuilder(
            X, mu - y, mu, max_depth, l2_leaf_penalty, leaf_count_penalty,
            min_child_weight, max_delta_step,
        )
        tree = builder.build()
        f = f + learning_rate * tree.predict(X)
        if np.max(f) > np.log(EXPLOSION_LIMIT):
            raise NumericalError(
                f"boosted intensities exceed {EXPLOSION_LIMIT:g} after round {k + 1}; "
                f"learning rate {learning_rate:g} is too large"
            )
        trees.append(tree)
        trace.append(poisson_deviance(y, np.exp(f)))

    logger.debug("boosted %d rounds, training deviance %.4f", rounds, trace[-1])
    return BoostedModel(
        base_score=base, trees=tuple(trees), learning_rate=learning_rate,
        leaf_count_penalty=leaf_count_penalty, l2_leaf_penalty=l2_leaf_penalty,
        max_depth=max_depth, min_child_weight=min_child_weight, max_delta_step=max_delta_step,
        deviance_trace=tuple(trace),
    )


class BoostGrid(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_depth: tuple[int, ...] = (1, 2, 3)
    l2_leaf_penalty: tuple[float, ...] = (1.0, 5.0)
    leaf_count_penalty: tuple[float, ...] = (0.0, 1.0)
    rounds: tuple[int, ...] = Field(default=(10, 25, 50, 100, 200), min_length=1)
    learning_rate: float = 0.1

    def points(self) -> list[tuple[int, float, float]]:
        return list(itertools.product(self.max_depth, self.l2_leaf_penalty, self.leaf_count_penalty))


class BoostParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_depth: int
    l2_leaf_penalty: float
    leaf_count_penalty: float
    rounds: int
    learning_rate: float
    cv_deviance: float


def _fold_deviances(
    X: np.ndarray, y: np.ndarray, train: np.ndarray, test: np.ndarray,
    point: tuple[int, float, float], rounds: Sequence[int], learning_rate: float,
) -> np.ndarray:
    depth, l2, gamma = point
    model = fit_boosted(
        X[train], max(rounds), learning_rate=learning_rate, leaf_count_penalty=gamma,
        l2_leaf_penalty=l2, max_depth=depth, y=y[train],
    )
    staged = model.staged_predict(X[test], rounds)
    return np.array([mean_poisson_deviance(y[test], staged[r]) for r in rounds])


def tune_boosted(
    data: Sequence[FeatureDiffRow] | np.ndarray,
    grid: Optional[BoostGrid] = None,
    y: Optional[np.ndarray] = None,
    folds: int = 10,
    seed: int = 0,
    threads: int = 1,
    groups: Optional[np.ndarray] = None,
) -> BoostParams:
    """Grid point and round count with the lowest mean out-of-fold deviance."""
    grid = grid or BoostGrid()
    groups = training_groups(data, y, groups)
    X, y = training_arrays(data, y)
    points = grid.points()
    if not points:
        raise DataError("boosting grid is empty")
    rounds = sorted(set(grid.rounds))
    splits = kfold_indices(len(y), min(folds, n_groups(len(y), groups)), seed, groups)

    jobs = [(p, s) for p in points for s in splits]
    results = Parallel(n_jobs=threads)(
        delayed(_fold_deviances)(X, y, train, test, point, rounds, grid.learning_rate)
        for point, (train, test) in jobs
    )
    scores = np.array(results).reshape(len(points), len(splits), len(rounds)).mean(axis=1)

    # earliest grid point, then fewest rounds, wins ties
    best = None
    for p, point in enumerate(points):
        for r, n_rounds in enumerate(rounds):
            if best is None or scores[p, r] < best[0]:
                best = (scores[p, r], point, n_rounds)
    score, (depth, l2, gamma), n_rounds = best
    logger.info(
        "boosting cv: depth=%d l2=%g gamma=%g rounds=%d deviance=%.5f",
        depth, l2, gamma, n_rounds, score,
    )
    return BoostParams(
        max_depth=depth, l2_leaf_penalty=l2, leaf_count_penalty=gamma, rounds=n_rounds,
        learning_rate=grid.learning_rate, cv_deviance=float(score),
    )
