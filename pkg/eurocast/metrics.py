"""Forecast quality measures on 90-minute results.

Outcomes are coded 1 (team 1 wins), 2 (draw) and 3 (team 2 wins), which is also the
ordinal order used by the rank probability score.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import DataError
from .match_prob import outcome_probs_many

DRAW = 2
SIMPLEX_TOLERANCE = 1e-9


class MetricReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    ml: float = Field(ge=0, le=1)
    cr: float = Field(ge=0, le=1)
    rps: float = Field(ge=0)
    mae_goals: Optional[float] = None
    mae_goaldiff: Optional[float] = None
    n_matches: int = Field(ge=0)


def outcome_of(goals1: int, goals2: int) -> int:
    return 1 if goals1 > goals2 else (DRAW if goals1 == goals2 else 3)


def _check_simplex(probs: Sequence[float]) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.shape != (3,) or np.any(p < 0) or abs(p.sum() - 1.0) > SIMPLEX_TOLERANCE:
        raise DataError(f"outcome probabilities must be a 3-point simplex, got {p.tolist()}")
    return p


def predicted_outcome(probs: np.ndarray) -> np.ndarray:
    """Argmax outcome per row; any tie for the maximum resolves to the draw."""
    probs = np.atleast_2d(probs)
    top = probs.max(axis=1, keepdims=True)
    tied = (probs == top).sum(axis=1) > 1
    return np.where(tied, DRAW, probs.argmax(axis=1) + 1)


def rank_probability_score(probs: np.ndarray, outcomes: np.ndarray) -> np.ndarray:
    probs = np.atleast_2d(probs)
    observed = np.zeros_like(probs)
    observed[np.arange(len(probs)), np.asarray(outcomes) - 1] = 1.0
    gaps = np.cumsum(probs - observed, axis=1)[:, :2]
    return 0.5 * (gaps**2).sum(axis=1)


def match_metrics(probs: Sequence[float], outcome: int) -> tuple[float, float, float]:
    """(ML, CR, RPS) contribution of one match."""
    p = _check_simplex(probs)
    if outcome not in (1, 2, 3):
        raise DataError(f"outcome must be 1, 2 or 3, got {outcome}")
    ml = float(p[outcome - 1])
    cr = float(predicted_outcome(p)[0] == outcome)
    rps = float(rank_probability_score(p, np.array([outcome]))[0])
    return ml, cr, rps


def mae_metrics(
    actual: tuple[int, int], predicted: tuple[float, float]
) -> tuple[tuple[float, float], float]:
    """Per-team goal errors and the goal-difference error of one match."""
    g1, g2 = actual
    l1, l2 = predicted
    if g1 < 0 or g2 < 0:
        raise DataError(f"goals must be non-negative, got {actual}")
    return (abs(g1 - l1), abs(g2 - l2)), abs((g1 - g2) - (l1 - l2))


def bookmaker_baseline(three_way_odds: Sequence[float]) -> tuple[float, float, float]:
    odds = np.asarray(three_way_odds, dtype=float)
    if odds.shape != (3,) or not np.all(np.isfinite(odds)) or np.any(odds <= 1.0):
        raise DataError(f"three-way odds must all exceed 1, got {list(three_way_odds)}")
    implied = 1.0 / odds
    p = implied / implied.sum()
    return float(p[0]), float(p[1]), float(p[2])


def evaluate_probabilities(
    probs: np.ndarray,
    goals: np.ndarray,
    intensities: Optional[np.ndarray] = None,
) -> MetricReport:
    """Pool metrics over matches; ``goals`` and ``intensities`` are ``(n, 2)`` arrays."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    goals = np.atleast_2d(np.asarray(goals))
    n = len(goals)
    if n == 0:
        raise DataError("no matches to evaluate")
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > SIMPLEX_TOLERANCE):
        raise DataError("outcome probabilities must be 3-point simplices")
    outcomes = np.where(goals[:, 0] > goals[:, 1], 1, np.where(goals[:, 0] == goals[:, 1], DRAW, 3))
    mae_goals = mae_goaldiff = None
    if intensities is not None:
        lam = np.atleast_2d(np.asarray(intensities, dtype=float))
        mae_goals = float(np.abs(goals - lam).sum() / (2 * n))
        diff = (goals[:, 0] - goals[:, 1]) - (lam[:, 0] - lam[:, 1])
        mae_goaldiff = float(np.abs(diff).sum() / n)
    return MetricReport(
        ml=float(probs[np.arange(n), outcomes - 1].mean()),
        cr=float((predicted_outcome(probs) == outcomes).mean()),
        rps=float(rank_probability_score(probs, outcomes).mean()),
        mae_goals=mae_goals,
        mae_goaldiff=mae_goaldiff,
        n_matches=n,
    )


def evaluate_predictions(intensities: np.ndarray, goals: np.ndarray) -> MetricReport:
    """Metrics of a goal model from its ``(n, 2)`` intensity pairs."""
    lam = np.atleast_2d(np.asarray(intensities, dtype=float))
    probs = outcome_probs_many(lam[:, 0], lam[:, 1])
    return evaluate_probabilities(probs, goals, lam)


def min_max_normalise(values: np.ndarray, higher_is_better: bool = True) -> np.ndarray:
    """Scale to [0, 100] with the best value at 100; a constant metric maps to 100."""
    values = np.asarray(values, dtype=float)
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return np.full(values.shape, 100.0)
    scaled = (values - lo) / (hi - lo) if higher_is_better else (hi - values) / (hi - lo)
    return 100.0 * scaled
