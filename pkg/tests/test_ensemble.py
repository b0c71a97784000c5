from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from eurocast.ensemble import (
    MEMBERS,
    PREDICTION_COLUMNS,
    CombinedModel,
    ModelSpec,
    fit_members,
    group_by_tournament,
    loto_cv,
    pair_rows,
    permutation_importance,
    predict_combined,
    tune_weights,
    weight_grid,
    weight_grid_frame,
)
from eurocast.errors import DataError
from eurocast.models import N_FEATURES
from eurocast.predictors.boosting import BoostGrid
from eurocast.predictors.lasso import LassoPoissonModel


class ConstantModel:
    def __init__(self, value: float) -> None:
        self.value = value

    def predict(self, X):
        return np.full(np.atleast_2d(X).shape[0], self.value)


SMALL_SPEC = ModelSpec(
    folds=3, forest_trees=20, forest_tuning_trees=10, mtry_grid=(1, 2),
    boost_grid=BoostGrid(
        max_depth=(1,), l2_leaf_penalty=(1.0,), leaf_count_penalty=(0.0,), rounds=(5, 10)
    ),
)


def test_combined_intensity_is_the_weighted_mean():
    model = CombinedModel(
        weights=(0.15, 0.85, 0.0), lasso=ConstantModel(1.0), forest=ConstantModel(2.0),
        boosted=ConstantModel(5.0),
    )
    assert predict_combined(model, np.zeros(N_FEATURES)) == pytest.approx(1.85)
    assert np.isnan(model.member_predictions(np.zeros((1, N_FEATURES)))).sum() == 0


def test_zero_weight_members_may_be_missing():
    model = CombinedModel(weights=(0.0, 1.0, 0.0), forest=ConstantModel(1.4))
    assert predict_combined(model, np.zeros(N_FEATURES)) == pytest.approx(1.4)
    assert np.isnan(model.member_predictions(np.zeros((1, N_FEATURES)))[0, 0])
    with pytest.raises(DataError, match="not fitted"):
        CombinedModel(weights=(0.5, 0.5, 0.0), forest=ConstantModel(1.0)).predict(
            np.zeros((1, N_FEATURES))
        )


@pytest.mark.parametrize("weights", [(0.5, 0.5, 0.5), (1.2, -0.2, 0.0), (0.5, 0.5)])
def test_weights_must_lie_on_the_simplex(weights):
    with pytest.raises(DataError):
        CombinedModel(weights=weights)


def test_weight_grid_covers_the_simplex():
    grid = weight_grid()
    assert len(grid) == 231
    assert len(set(grid)) == 231
    assert all(abs(sum(w) - 1.0) < 1e-12 and min(w) >= 0 for w in grid)
    assert (0.15, 0.85, 0.0) in grid
    with pytest.raises(DataError):
        weight_grid(0.3)


def _prediction_frame(lam_by_member, goals):
    frame = pd.DataFrame({
        "year": 2016, "match_id": range(len(goals)), "team1": "a", "team2": "b",
        "goals1": goals[:, 0], "goals2": goals[:, 1],
    })
    for name, lam in lam_by_member.items():
        frame[f"{name}_1"] = lam[:, 0]
        frame[f"{name}_2"] = lam[:, 1]
    return frame


def test_identical_members_score_alike_everywhere(rng):
    lam = rng.uniform(0.5, 2.5, size=(40, 2))
    goals = rng.poisson(lam)
    entries = tune_weights(_prediction_frame({m: lam for m in MEMBERS}, goals))
    assert len(entries) == 231
    ml = np.array([e.metrics.ml for e in entries])
    rps = np.array([e.metrics.rps for e in entries])
    assert np.ptp(ml) < 1e-12
    assert np.ptp(rps) < 1e-12


def test_weight_tuning_ranks_by_average_normalised_score(rng):
    truth = rng.uniform(0.5, 2.5, size=(300, 2))
    goals = rng.poisson(truth)
    members = {"lasso": truth, "forest": np.full_like(truth, 1.3), "xgb": truth[::-1]}
    frame = _prediction_frame(members, goals)
    entries = tune_weights(frame)
    scores = [e.avg_norm for e in entries]
    assert scores == sorted(scores, reverse=True)
    assert entries[0].weights[0] > 0.5
    assert tune_weights(frame, threads=2) == entries

    table = weight_grid_frame(entries)
    assert len(table) == 231
    assert list(table.columns[:3]) == ["w_lasso", "w_forest", "w_xgb"]
    assert table["avg_norm"].iloc[0] == entries[0].avg_norm


def test_rows_are_paired_and_grouped(make_diff_rows):
    rows = make_diff_rows(years=(2016, 2008), matches_per_year=4)
    grouped = group_by_tournament(rows)
    assert list(grouped) == [2008, 2016]
    pairs = pair_rows(grouped[2008])
    assert len(pairs) == 4
    assert all(a.team.startswith("T1") and b.team.startswith("T2") for a, b in pairs)
    with pytest.raises(DataError, match="expected 2"):
        pair_rows(grouped[2008][:-1])


def test_leave_one_tournament_out_predicts_every_match(make_diff_rows):
    rows = make_diff_rows()
    data = group_by_tournament(rows)
    odds = {(2008, f"T1-{k}", f"T2-{k}"): (2.0, 3.4, 3.9) for k in range(10)}
    spec = ModelSpec(members=("lasso",), folds=3)
    result = loto_cv(data, spec, three_way_odds=odds)

    assert list(result.predictions.columns) == PREDICTION_COLUMNS + ["lasso_1", "lasso_2"]
    assert len(result.predictions) == 90
    assert set(result.tuning) == {2008, 2012, 2016}
    assert result.reports["lasso"].n_matches == 90
    assert result.reports["bookmaker"].n_matches == 10
    assert (result.predictions[["lasso_1", "lasso_2"]].to_numpy() > 0).all()

    with pytest.raises(DataError, match="two tournaments"):
        loto_cv({2008: data[2008]}, spec)


def test_fitted_members_combine(make_diff_rows):
    rows = make_diff_rows()
    fitted = fit_members(rows, SMALL_SPEC)
    assert set(fitted.models) == set(MEMBERS)
    assert fitted.tuning["forest"]["mtry"] in (1, 2)
    assert fitted.tuning["xgb"]["rounds"] in (5, 10)
    assert fitted.tuning["lasso"]["rule"] == "min"

    X = np.array([r.diff for r in rows[:6]])
    combined = fitted.combined((0.15, 0.85, 0.0))
    expected = 0.15 * fitted.models["lasso"].predict(X) + 0.85 * fitted.models["forest"].predict(X)
    np.testing.assert_allclose(combined.predict(X), expected)


def test_irrelevant_features_have_zero_importance(make_diff_rows):
    rows = make_diff_rows()
    coefficients = np.zeros(N_FEATURES)
    coefficients[0] = 0.5
    model = LassoPoissonModel(
        intercept=0.1, coefficients=coefficients, penalty=0.0,
        feature_mean=np.zeros(N_FEATURES), feature_scale=np.ones(N_FEATURES),
    )
    scores = permutation_importance(model, rows, repeats=20, seed=3)
    assert scores["hist_ability"] > 0
    assert all(v == 0.0 for k, v in scores.items() if k != "hist_ability")
    assert permutation_importance(model, rows, repeats=20, seed=3, threads=2) == scores

    unchanged = permutation_importance(model, rows, repeats=3, permuter=lambda col, rng: col)
    assert all(v == 0.0 for v in unchanged.values())
