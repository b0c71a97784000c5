"""Goal-count regressors: LASSO Poisson GLM, regression forest and boosted trees.

Every fitted model exposes ``predict(X) -> λ`` on rows of feature differences and never
returns a non-positive intensity.
"""

from __future__ import annotations

from typing import Optional, Protocol, Sequence, runtime_checkable

import numpy as np
from scipy.special import gammaln, xlogy

from ..errors import DataError
from ..models import N_FEATURES, FeatureDiffRow


@runtime_checkable
class GoalModel(Protocol):
    def predict(self, X: np.ndarray) -> np.ndarray: ...


def training_arrays(
    data: Sequence[FeatureDiffRow] | np.ndarray, y: Optional[np.ndarray] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Accept either FeatureDiffRows or an ``(X, y)`` pair."""
    if y is None:
        rows = list(data)
        X = np.array([r.diff for r in rows], dtype=float).reshape(len(rows), N_FEATURES)
        y = np.array([r.goals for r in rows], dtype=float)
    else:
        X = np.asarray(data, dtype=float)
        y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError(f"feature matrix {X.shape} does not match {y.shape[0]} responses")
    if np.any(y < 0) or not np.all(np.isfinite(X)):
        raise DataError("responses must be non-negative and features finite")
    return X, y


def training_groups(
    data: Sequence[FeatureDiffRow] | np.ndarray,
    y: Optional[np.ndarray] = None,
    groups: Optional[np.ndarray] = None,
) -> Optional[np.ndarray]:
    """Fold labels keeping both rows of a match together; ``None`` means one group per row."""
    if groups is not None:
        return np.asarray(groups)
    if y is not None:
        return None
    labels: dict[tuple[int, int], int] = {}
    return np.array(
        [labels.setdefault((r.tournament_year, r.match_id), len(labels)) for r in data],
        dtype=np.int64,
    )


ETA_LIMIT = 30.0


def clip_eta(eta: np.ndarray | float) -> np.ndarray:
    """Bound log-intensities so exp() stays finite."""
    return np.clip(eta, -ETA_LIMIT, ETA_LIMIT)


def poisson_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    """Summed Poisson deviance ``2 Σ [y log(y/μ) − (y − μ)]``."""
    return float(2.0 * np.sum(xlogy(y, y) - xlogy(y, mu) - (y - mu)))


def mean_poisson_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    return poisson_deviance(y, mu) / max(len(y), 1)


def poisson_nll(y: np.ndarray, mu: np.ndarray) -> float:
    """Mean negative Poisson log-likelihood."""
    return float(np.mean(mu - xlogy(y, mu) + gammaln(y + 1.0)))
