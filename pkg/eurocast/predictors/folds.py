from __future__ import annotations

import logging
from typing import Optional

import numpy as np
from sklearn.model_selection import KFold

logger = logging.getLogger(__name__)


def _group_labels(n: int, groups: Optional[np.ndarray]) -> np.ndarray:
    if groups is None:
        return np.arange(n)
    groups = np.asarray(groups)
    if groups.shape != (n,):
        raise ValueError(f"expected {n} group labels, got shape {groups.shape}")
    return np.unique(groups, return_inverse=True)[1].reshape(n)


def n_groups(n: int, groups: Optional[np.ndarray] = None) -> int:
    return int(_group_labels(n, groups).max(initial=-1)) + 1


def kfold_indices(
    n: int, folds: int, seed: int, groups: Optional[np.ndarray] = None
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deterministic shuffled (train, test) index pairs.

    Rows sharing a group label always land on the same side of a split. Without
    labels every row is its own group.
    """
    labels = _group_labels(n, groups)
    splitter = KFold(n_splits=folds, shuffle=True, random_state=seed)
    out = []
    for _, test_groups in splitter.split(np.zeros((labels.max() + 1, 1))):
        in_test = np.isin(labels, test_groups)
        out.append((np.flatnonzero(~in_test), np.flatnonzero(in_test)))
    return out


def usable_folds(
    y: np.ndarray, folds: int, seed: int, minimum: int = 2, groups: Optional[np.ndarray] = None
) -> int:
    """Largest fold count <= ``folds`` whose training parts all have varying responses.

    Returns 0 when even ``minimum`` folds leave a constant training response.
    """
    k = min(folds, n_groups(len(y), groups))
    while k >= minimum:
        if all(np.ptp(y[train]) > 0 for train, _ in kfold_indices(len(y), k, seed, groups)):
            if k < folds:
                logger.warning("constant responses in a training fold; using %d folds", k)
            return k
        k -= 1
    return 0
