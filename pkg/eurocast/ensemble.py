"""Combined goal model, leave-one-tournament-out evaluation and weight tuning."""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Callable, Literal, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field

from .errors import DataError
from .match_prob import INTENSITY_FLOOR, outcome_probs_many
from .metrics import (
    MetricReport,
    bookmaker_baseline,
    evaluate_predictions,
    evaluate_probabilities,
    min_max_normalise,
)
from .models import FEATURE_NAMES, FeatureDiffRow
from .predictors import GoalModel, training_arrays, training_groups
from .predictors.boosting import BoostedModel, BoostGrid, fit_boosted, tune_boosted
from .predictors.forest import MTRY_GRID, ForestModel, cross_validate_forest, fit_forest
from .predictors.lasso import LassoPoissonModel, cross_validate_lasso, fit_lasso

logger = logging.getLogger(__name__)

MEMBERS: tuple[str, ...] = ("lasso", "forest", "xgb")
WEIGHT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class CombinedModel:
    weights: tuple[float, float, float]
    lasso: Optional[LassoPoissonModel] = None
    forest: Optional[ForestModel] = None
    boosted: Optional[BoostedModel] = None

    def __post_init__(self) -> None:
        w = tuple(float(v) for v in self.weights)
        if len(w) != 3 or any(v < 0 for v in w):
            raise DataError(f"weights must be three non-negative numbers, got {self.weights}")
        if abs(sum(w) - 1.0) > WEIGHT_TOLERANCE:
            raise DataError(f"weights must sum to 1, got {sum(w)!r}")
        object.__setattr__(self, "weights", w)

    @property
    def members(self) -> tuple[Optional[GoalModel], ...]:
        return (self.lasso, self.forest, self.boosted)

    def member_predictions(self, X: np.ndarray) -> np.ndarray:
        """``(n, 3)`` member intensities; absent members give NaN."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full((X.shape[0], 3), np.nan)
        for i, member in enumerate(self.members):
            if member is not None:
                out[:, i] = member.predict(X)
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lam = np.zeros(X.shape[0])
        for name, weight, member in zip(MEMBERS, self.weights, self.members):
            if weight == 0:
                continue
            if member is None:
                raise DataError(f"member {name!r} has weight {weight} but is not fitted")
            lam += weight * member.predict(X)
        return np.maximum(lam, INTENSITY_FLOOR)


def predict_combined(model: CombinedModel, diff: Sequence[float]) -> float:
    return float(model.predict(np.asarray(diff, dtype=float).reshape(1, -1))[0])


class ModelSpec(BaseModel):
    """Which members to fit and how to tune them."""

    model_config = ConfigDict(frozen=True)

    members: tuple[Literal["lasso", "forest", "xgb"], ...] = MEMBERS
    folds: int = Field(default=10, ge=2)
    seed: int = 0
    lasso_rule: Literal["min", "1se"] = "min"
    forest_trees: int = Field(default=5000, ge=1)
    forest_tuning_trees: int = Field(default=500, ge=1)
    forest_min_leaf: int = Field(default=5, ge=1)
    mtry_grid: tuple[int, ...] = MTRY_GRID
    boost_grid: BoostGrid = Field(default_factory=BoostGrid)
    threads: int = Field(default=1, ge=1)


@dataclass(frozen=True)
class FittedMembers:
    models: dict[str, GoalModel]
    tuning: dict[str, Any] = field(default_factory=dict)

    def combined(self, weights: Sequence[float]) -> CombinedModel:
        return CombinedModel(
            weights=tuple(weights),
            lasso=self.models.get("lasso"),
            forest=self.models.get("forest"),
            boosted=self.models.get("xgb"),
        )


def fit_members(
    data: Sequence[FeatureDiffRow] | np.ndarray,
    spec: ModelSpec,
    y: Optional[np.ndarray] = None,
    groups: Optional[np.ndarray] = None,
) -> FittedMembers:
    """Tune each requested member by k-fold CV over whole matches, then refit on all rows."""
    groups = training_groups(data, y, groups)
    X, y = training_arrays(data, y)
    models: dict[str, GoalModel] = {}
    tuning: dict[str, Any] = {}
    if "lasso" in spec.members:
        cv = cross_validate_lasso(
            X, y, folds=spec.folds, seed=spec.seed, rule=spec.lasso_rule, threads=spec.threads,
            groups=groups,
        )
        tuning["lasso"] = {"penalty": cv.penalty, "folds": cv.folds, "rule": cv.rule}
        models["lasso"] = fit_lasso(X, cv.penalty, y=y)
    if "forest" in spec.members:
        report = cross_validate_forest(
            X, y, grid=spec.mtry_grid, folds=spec.folds, trees=spec.forest_tuning_trees,
            seed=spec.seed, min_leaf=spec.forest_min_leaf, threads=spec.threads, groups=groups,
        )
        mtry = min(report, key=lambda e: (e.cv_nll, e.mtry)).mtry
        tuning["forest"] = {"mtry": mtry, "cv_nll": {e.mtry: e.cv_nll for e in report}}
        models["forest"] = fit_forest(
            X, mtry, spec.forest_trees, spec.seed, y=y, min_leaf=spec.forest_min_leaf,
            threads=spec.threads,
        )
    if "xgb" in spec.members:
        params = tune_boosted(
            X, spec.boost_grid, y=y, folds=spec.folds, seed=spec.seed, threads=spec.threads,
            groups=groups,
        )
        tuning["xgb"] = params.model_dump()
        models["xgb"] = fit_boosted(
            X, params.rounds, learning_rate=params.learning_rate,
            leaf_count_penalty=params.leaf_count_penalty, l2_leaf_penalty=params.l2_leaf_penalty,
            max_depth=params.max_depth, y=y,
        )
    return FittedMembers(models=models, tuning=tuning)


def group_by_tournament(rows: Sequence[FeatureDiffRow]) -> "OrderedDict[int, list[FeatureDiffRow]]":
    out: "OrderedDict[int, list[FeatureDiffRow]]" = OrderedDict()
    for row in sorted(rows, key=lambda r: r.tournament_year):
        out.setdefault(row.tournament_year, []).append(row)
    return out


def pair_rows(rows: Sequence[FeatureDiffRow]) -> list[tuple[FeatureDiffRow, FeatureDiffRow]]:
    """The two rows of every match, team 1 first, in order of first appearance."""
    by_match: "OrderedDict[tuple[int, int], list[FeatureDiffRow]]" = OrderedDict()
    for row in rows:
        by_match.setdefault((row.tournament_year, row.match_id), []).append(row)
    pairs = []
    for key, members in by_match.items():
        if len(members) != 2:
            raise DataError(f"match {key} has {len(members)} rows; expected 2")
        pairs.append((members[0], members[1]))
    return pairs


PREDICTION_COLUMNS = ["year", "match_id", "team1", "team2", "goals1", "goals2"]


@dataclass(frozen=True)
class LotoResult:
    reports: dict[str, MetricReport]
    predictions: pd.DataFrame
    tuning: dict[int, dict[str, Any]]


def _held_out_frame(
    year: int, pairs: Sequence[tuple[FeatureDiffRow, FeatureDiffRow]], fitted: FittedMembers
) -> pd.DataFrame:
    X1 = np.array([a.diff for a, _ in pairs], dtype=float)
    X2 = np.array([b.diff for _, b in pairs], dtype=float)
    frame = pd.DataFrame({
        "year": year,
        "match_id": [a.match_id for a, _ in pairs],
        "team1": [a.team for a, _ in pairs],
        "team2": [b.team for _, b in pairs],
        "goals1": [a.goals for a, _ in pairs],
        "goals2": [b.goals for _, b in pairs],
    })
    for name, model in fitted.models.items():
        frame[f"{name}_1"] = model.predict(X1)
        frame[f"{name}_2"] = model.predict(X2)
    return frame


def member_intensities(predictions: pd.DataFrame, member: str) -> np.ndarray:
    columns = [f"{member}_1", f"{member}_2"]
    missing = [c for c in columns if c not in predictions.columns]
    if missing:
        raise DataError(f"predictions lack columns {missing}")
    return predictions[columns].to_numpy(dtype=float)


def loto_cv(
    data: Mapping[int, Sequence[FeatureDiffRow]],
    spec: ModelSpec,
    three_way_odds: Optional[Mapping[tuple[int, str, str], Sequence[float]]] = None,
) -> LotoResult:
    """Hold out each tournament once: tune and fit on the rest, predict its matches."""
    if len(data) < 2:
        raise DataError("leave-one-tournament-out needs at least two tournaments")
    for year, rows in data.items():
        if not rows:
            raise DataError(f"tournament {year} has no matches")

    frames, tuning = [], {}
    for year, held_out in data.items():
        train = [r for other, rows in data.items() if other != year for r in rows]
        logger.info("loto fold %d: training on %d rows, holding out %d", year, len(train), len(held_out))
        fitted = fit_members(train, spec)
        tuning[year] = fitted.tuning
        frames.append(_held_out_frame(year, pair_rows(held_out), fitted))
    predictions = pd.concat(frames, ignore_index=True)

    goals = predictions[["goals1", "goals2"]].to_numpy()
    reports = {
        name: evaluate_predictions(member_intensities(predictions, name), goals)
        for name in spec.members
    }
    if three_way_odds:
        reports["bookmaker"] = bookmaker_report(predictions, three_way_odds)
    return LotoResult(reports=reports, predictions=predictions, tuning=tuning)


def bookmaker_report(
    predictions: pd.DataFrame, three_way_odds: Mapping[tuple[int, str, str], Sequence[float]]
) -> MetricReport:
    probs, covered = [], []
    for i, row in enumerate(predictions.itertuples(index=False)):
        odds = three_way_odds.get((int(row.year), row.team1, row.team2))
        if odds is not None:
            probs.append(bookmaker_baseline(odds))
            covered.append(i)
    if not covered:
        raise DataError("no three-way odds match the evaluated fixtures")
    if len(covered) < len(predictions):
        logger.warning("three-way odds cover %d of %d matches", len(covered), len(predictions))
    goals = predictions[["goals1", "goals2"]].to_numpy()[covered]
    return evaluate_probabilities(np.array(probs), goals)


def weight_grid(step: float = 0.05) -> list[tuple[float, float, float]]:
    """Every non-negative weight triple on the step lattice of the simplex."""
    n = int(round(1.0 / step))
    if not np.isclose(n * step, 1.0):
        raise DataError(f"1 must be a multiple of the grid step, got {step}")
    return [(i / n, j / n, (n - i - j) / n) for i in range(n + 1) for j in range(n + 1 - i)]


@dataclass(frozen=True)
class WeightGridEntry:
    weights: tuple[float, float, float]
    metrics: MetricReport
    ml_norm: float
    cr_norm: float
    rps_norm: float
    avg_norm: float


def _grid_reports(
    points: Sequence[tuple[float, float, float]], lam: np.ndarray, goals: np.ndarray
) -> list[MetricReport]:
    out = []
    for w in points:
        combined = np.maximum(np.tensordot(lam, np.asarray(w), axes=([2], [0])), INTENSITY_FLOOR)
        probs = outcome_probs_many(combined[:, 0], combined[:, 1])
        out.append(evaluate_probabilities(probs, goals, combined))
    return out


def tune_weights(
    predictions: pd.DataFrame, step: float = 0.05, threads: int = 1
) -> list[WeightGridEntry]:
    """Score every simplex grid point on cached out-of-sample member predictions."""
    lam = np.stack([member_intensities(predictions, m) for m in MEMBERS], axis=2)  # (n, 2, 3)
    goals = predictions[["goals1", "goals2"]].to_numpy()
    points = weight_grid(step)
    batches = np.array_split(np.arange(len(points)), max(1, threads))
    results = Parallel(n_jobs=threads)(
        delayed(_grid_reports)([points[i] for i in batch], lam, goals) for batch in batches
    )
    reports = [r for batch in results for r in batch]

    ml_norm = min_max_normalise(np.array([r.ml for r in reports]))
    cr_norm = min_max_normalise(np.array([r.cr for r in reports]))
    rps_norm = min_max_normalise(np.array([r.rps for r in reports]), higher_is_better=False)
    avg_norm = (ml_norm + cr_norm + rps_norm) / 3.0
    entries = [
        WeightGridEntry(points[i], reports[i], float(ml_norm[i]), float(cr_norm[i]),
                        float(rps_norm[i]), float(avg_norm[i]))
        for i in range(len(points))
    ]
    entries.sort(key=lambda e: (-e.avg_norm, -e.metrics.ml, e.weights))
    return entries


def weight_grid_frame(entries: Sequence[WeightGridEntry]) -> pd.DataFrame:
    return pd.DataFrame([
        {
            "w_lasso": e.weights[0], "w_forest": e.weights[1], "w_xgb": e.weights[2],
            "ml": e.metrics.ml, "cr": e.metrics.cr, "rps": e.metrics.rps,
            "ml_norm": e.ml_norm, "cr_norm": e.cr_norm, "rps_norm": e.rps_norm,
            "avg_norm": e.avg_norm,
        }
        for e in entries
    ])


Permuter = Callable[[np.ndarray, np.random.Generator], np.ndarray]


def _shuffle(column: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(column)


def _feature_importance(
    model: GoalModel, X: np.ndarray, y: np.ndarray, j: int, repeats: int,
    seed_seq: np.random.SeedSequence, permuter: Permuter, baseline: float,
) -> float:
    rng = np.random.default_rng(seed_seq)
    diffs = np.empty(repeats)
    for r in range(repeats):
        Xp = X.copy()
        Xp[:, j] = permuter(X[:, j], rng)
        diffs[r] = np.mean(np.abs(y - model.predict(Xp))) - baseline
    return float(diffs.mean())


def permutation_importance(
    model: GoalModel,
    data: Sequence[FeatureDiffRow] | np.ndarray,
    y: Optional[np.ndarray] = None,
    repeats: int = 100,
    seed: int = 0,
    permuter: Optional[Permuter] = None,
    feature_names: Sequence[str] = FEATURE_NAMES,
    threads: int = 1,
) -> dict[str, float]:
    """Mean in-sample MAE increase when one feature column is shuffled."""
    X, y = training_arrays(data, y)
    if repeats < 1:
        raise DataError(f"repeats must be at least 1, got {repeats}")
    baseline = float(np.mean(np.abs(y - model.predict(X))))
    children = np.random.SeedSequence(seed).spawn(X.shape[1])
    scores = Parallel(n_jobs=threads)(
        delayed(_feature_importance)(model, X, y, j, repeats, child, permuter or _shuffle, baseline)
        for j, child in enumerate(children)
    )
    return dict(zip(feature_names, scores))
