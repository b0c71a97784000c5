from __future__ import annotations

import numpy as np
import pytest

from eurocast.errors import DataError, NumericalError
from eurocast.predictors.boosting import BoostGrid, fit_boosted, tune_boosted

STEP_X = np.array([[0.0], [1.0], [2.0], [3.0]])
STEP_Y = np.array([0.0, 0.0, 3.0, 3.0])


def test_first_split_separates_the_gradient_signs():
    model = fit_boosted(
        STEP_X, rounds=1, learning_rate=1.0, l2_leaf_penalty=0.0, max_depth=1, y=STEP_Y,
        max_delta_step=None,
    )
    tree = model.trees[0]
    assert (tree.feature[0], tree.threshold[0]) == (0, 1.5)
    assert tree.value[tree.left[0]] == pytest.approx(-1.0)
    assert tree.value[tree.right[0]] == pytest.approx(1.0)
    assert model.base_score == pytest.approx(np.log(1.5))
    assert model.predict(np.array([[0.5], [2.5]])) == pytest.approx(
        [1.5 * np.exp(-1.0), 1.5 * np.exp(1.0)]
    )


def test_leaf_weights_are_clipped_by_max_delta_step():
    model = fit_boosted(
        STEP_X, rounds=1, learning_rate=1.0, l2_leaf_penalty=0.0, max_depth=1, y=STEP_Y,
        max_delta_step=0.7,
    )
    tree = model.trees[0]
    assert sorted(tree.value[tree.feature == -1]) == pytest.approx([-0.7, 0.7])


def test_leaf_count_penalty_can_forbid_splits():
    model = fit_boosted(
        STEP_X, rounds=1, learning_rate=1.0, l2_leaf_penalty=0.0, max_depth=1, y=STEP_Y,
        leaf_count_penalty=100.0,
    )
    assert model.trees[0].n_nodes == 1


def test_zero_rounds_predict_the_mean(make_diff_rows):
    rows = make_diff_rows()
    goals = np.array([r.goals for r in rows], dtype=float)
    model = fit_boosted(rows, rounds=0)
    assert model.rounds == 0
    assert model.predict(np.array([r.diff for r in rows[:3]])) == pytest.approx(
        np.full(3, goals.mean())
    )


def test_training_deviance_falls_and_stages_agree(make_diff_rows):
    rows = make_diff_rows(years=range(2000, 2010), matches_per_year=40, seed=2)
    model = fit_boosted(rows, rounds=60, learning_rate=0.1, max_depth=2)
    trace = np.array(model.deviance_trace)
    assert len(trace) == 61
    assert trace[-1] < trace[0]
    X = np.array([r.diff for r in rows[:10]])
    staged = model.staged_predict(X, [0, 10, 60])
    assert staged[10] == pytest.approx(model.predict(X, rounds=10))
    assert staged[60] == pytest.approx(model.predict(X))
    assert staged[0] == pytest.approx(model.predict(X, rounds=0))


def test_runaway_intensities_are_reported():
    X = np.r_[np.ones(5), np.zeros(45)].reshape(-1, 1)
    y = np.r_[np.full(5, 1000.0), np.zeros(45)]
    with pytest.raises(NumericalError, match="learning rate"):
        fit_boosted(X, rounds=5, learning_rate=1.0, l2_leaf_penalty=0.0, y=y, max_delta_step=None)


def test_tuning_picks_a_grid_point(make_diff_rows):
    rows = make_diff_rows()
    grid = BoostGrid(max_depth=(1, 2), l2_leaf_penalty=(1.0,), leaf_count_penalty=(0.0,),
                     rounds=(5, 20))
    params = tune_boosted(rows, grid, folds=3, seed=0)
    assert params.max_depth in (1, 2)
    assert params.rounds in (5, 20)
    assert params.learning_rate == grid.learning_rate
    assert np.isfinite(params.cv_deviance)
    assert tune_boosted(rows, grid, folds=3, seed=0, threads=2) == params


def test_invalid_boosting_arguments():
    with pytest.raises(DataError):
        fit_boosted(STEP_X, rounds=-1, y=STEP_Y)
    with pytest.raises(DataError, match="zero"):
        fit_boosted(STEP_X, rounds=1, y=np.zeros(4))
    with pytest.raises(DataError, match="empty"):
        tune_boosted(STEP_X, BoostGrid(max_depth=()), y=STEP_Y, folds=2)
