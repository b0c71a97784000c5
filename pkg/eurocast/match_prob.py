"""Three-way outcome probabilities for two independent Poisson goal counts.

The goal difference of such a match is Skellam distributed. Outcome probabilities are
summed over a truncated goal grid (0..60 per side), which keeps every probability an
explicit, checkable sum; :func:`skellam_pmf` gives the closed Bessel form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ive
from scipy.stats import poisson

from .errors import DataError

INTENSITY_FLOOR = 1e-6
GOAL_GRID = 60


def clamp_intensity(value: float | np.ndarray) -> float | np.ndarray:
    return np.maximum(value, INTENSITY_FLOOR)


@dataclass(frozen=True)
class MatchIntensities:
    lambda1: float
    lambda2: float

    def __post_init__(self) -> None:
        for name in ("lambda1", "lambda2"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise DataError(f"{name} must be finite and non-negative, got {value}")
            object.__setattr__(self, name, float(max(value, INTENSITY_FLOOR)))

    def extra_time(self) -> "MatchIntensities":
        return MatchIntensities(self.lambda1 / 3.0, self.lambda2 / 3.0)


@dataclass(frozen=True)
class OutcomeProbs:
    win1: float
    draw: float
    win2: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.win1, self.draw, self.win2)


def skellam_pmf(k: int, lambda1: float, lambda2: float) -> float:
    """P(G1 - G2 = k) via the exponentially scaled Bessel function."""
    lambda1 = float(clamp_intensity(lambda1))
    lambda2 = float(clamp_intensity(lambda2))
    z = 2.0 * math.sqrt(lambda1 * lambda2)
    log_scale = -(lambda1 + lambda2) + z + 0.5 * k * (math.log(lambda1) - math.log(lambda2))
    return float(math.exp(log_scale) * ive(abs(k), z))


def goal_pmf(lam: float | np.ndarray, grid: int = GOAL_GRID) -> np.ndarray:
    goals = np.arange(grid + 1)
    lam = np.asarray(clamp_intensity(lam), dtype=float)
    return poisson.pmf(goals, lam[..., None]) if lam.ndim else poisson.pmf(goals, lam)


def score_matrix(lambda1: float, lambda2: float, grid: int = GOAL_GRID) -> np.ndarray:
    """``M[i, j] = P(G1 = i) P(G2 = j)`` on the truncated grid."""
    return np.outer(goal_pmf(lambda1, grid), goal_pmf(lambda2, grid))


def outcome_probs(intensities: MatchIntensities, grid: int = GOAL_GRID) -> OutcomeProbs:
    m = score_matrix(intensities.lambda1, intensities.lambda2, grid)
    win1 = float(np.tril(m, -1).sum())
    win2 = float(np.tril(m.T, -1).sum())
    draw = float(np.trace(m))
    total = win1 + draw + win2
    return OutcomeProbs(win1 / total, draw / total, win2 / total)


def outcome_probs_many(
    lambda1: np.ndarray, lambda2: np.ndarray, grid: int = GOAL_GRID
) -> np.ndarray:
    """Vectorised :func:`outcome_probs`; returns an ``(n, 3)`` array of (win1, draw, win2)."""
    p1 = goal_pmf(np.atleast_1d(np.asarray(lambda1, dtype=float)), grid)
    p2 = goal_pmf(np.atleast_1d(np.asarray(lambda2, dtype=float)), grid)
    m = p1[:, :, None] * p2[:, None, :]
    lower = np.tril(np.ones((grid + 1, grid + 1), dtype=bool), -1)
    win1 = m[:, lower].sum(axis=1)
    win2 = np.swapaxes(m, 1, 2)[:, lower].sum(axis=1)
    draw = np.trace(m, axis1=1, axis2=2)
    out = np.column_stack([win1, draw, win2])
    return out / out.sum(axis=1, keepdims=True)


def sample_score(intensities: MatchIntensities, rng: np.random.Generator) -> tuple[int, int]:
    g1, g2 = rng.poisson([intensities.lambda1, intensities.lambda2])
    return int(g1), int(g2)
