from __future__ import annotations

import datetime as dt

import numpy as np
import pytest

from eurocast.errors import DataError, NumericalError
from eurocast.hist_ability import time_weight
from eurocast.plus_minus import (
    EventType,
    MatchEvent,
    PlayerInfo,
    PMMatch,
    PMSettings,
    SegmentRecord,
    build_segments,
    design_matrix,
    fit_pm_ratings,
    segment_weights,
    team_ave_pm,
    teammate_targets,
)

DATE = dt.date(2023, 5, 1)

PLAIN = PMSettings(
    recency_weight=False, duration_weight=False, game_state_weight=False,
    home_advantage=False, red_cards=False, league_adjust=False, age_adjust=False,
    teammate_prior=False,
)


def _segment(home, away, gh=0, gaw=0, start=0.0, end=90.0, **extra) -> SegmentRecord:
    values = dict(
        match_id="m", start_min=start, end_min=end, home_lineup=frozenset(home),
        away_lineup=frozenset(away), goals_home=gh, goals_away=gaw, competition="league",
        match_date=DATE,
    )
    values.update(extra)
    return SegmentRecord(**values)


def _random_segments(gen, players, n, per_side=3):
    segments = []
    for k in range(n):
        picked = gen.choice(players, size=2 * per_side, replace=False)
        segments.append(_segment(
            picked[:per_side], picked[per_side:], int(gen.poisson(1.2)), int(gen.poisson(1.0)),
            start=0.0, end=float(gen.uniform(10, 90)), match_id=f"m{k}",
        ))
    return segments


def test_segments_split_at_every_change():
    match = PMMatch(match_id="1", date=DATE, home_team="H", away_team="A", competition="cup")
    lineups = {("1", "H"): ["h1", "h2"], ("1", "A"): ["a1", "a2"]}
    events = [
        MatchEvent(match_id="1", minute=10, event_type=EventType.goal, team="H"),
        MatchEvent(match_id="1", minute=30, event_type=EventType.sub_on, player="h3", team="H"),
        MatchEvent(match_id="1", minute=30, event_type=EventType.sub_off, player="h2", team="H"),
        MatchEvent(match_id="1", minute=60, event_type=EventType.red_card, player="a1", team="A"),
        MatchEvent(match_id="1", minute=70, event_type=EventType.goal, team="A"),
        MatchEvent(match_id="1", minute=94, event_type=EventType.full_time),
    ]
    first, second, third = build_segments(events, lineups, {"1": match})

    assert (first.start_min, first.end_min, first.goal_diff) == (0, 30, 1)
    assert second.home_lineup == {"h1", "h3"}
    assert (second.pre_segment_score_diff, second.goal_diff) == (1, 0)
    assert (third.end_min, third.red_away, third.away_lineup) == (94, 1, {"a2"})
    assert (third.goals_home, third.goals_away) == (0, 1)
    assert sum(s.duration for s in (first, second, third)) == 94


def test_match_without_events_is_one_segment():
    match = PMMatch(match_id="1", date=DATE, home_team="H", away_team="A", competition="cup")
    lineups = {("1", "H"): ["h1", "h2"], ("1", "A"): ["a1", "a2"]}
    (only,) = build_segments([], lineups, {"1": match})
    assert (only.start_min, only.end_min) == (0, 90)
    assert (only.goals_home, only.goals_away) == (0, 0)
    assert only.home_lineup == {"h1", "h2"}
    assert only.away_lineup == {"a1", "a2"}


def test_goal_in_the_final_minute_after_a_late_change():
    match = PMMatch(match_id="1", date=DATE, home_team="H", away_team="A", competition="cup")
    lineups = {("1", "H"): ["h1", "h2"], ("1", "A"): ["a1", "a2"]}
    events = [
        MatchEvent(match_id="1", minute=90, event_type=EventType.sub_off, player="h1", team="H"),
        MatchEvent(match_id="1", minute=90, event_type=EventType.sub_on, player="h3", team="H"),
        MatchEvent(match_id="1", minute=90, event_type=EventType.goal, team="H"),
    ]
    (only,) = build_segments(events, lineups, {"1": match})
    assert (only.start_min, only.end_min) == (0, 90)
    assert (only.goals_home, only.goals_away) == (1, 0)
    assert only.home_lineup == {"h1", "h2"}


def test_inconsistent_events_are_rejected():
    match = PMMatch(match_id="1", date=DATE, home_team="H", away_team="A", competition="cup")
    lineups = {("1", "H"): ["h1"], ("1", "A"): ["a1"]}
    off = MatchEvent(match_id="1", minute=20, event_type=EventType.sub_off, player="h9", team="H")
    with pytest.raises(DataError, match="not on the pitch"):
        build_segments([off], lineups, {"1": match})
    with pytest.raises(DataError, match="no line-up"):
        build_segments([], {}, {"1": match})
    with pytest.raises(ValueError):
        MatchEvent(match_id="1", minute=5, event_type=EventType.red_card, team="H")


def test_segment_weights_combine_recency_duration_and_game_state():
    settings = PMSettings(reference_date=dt.date(2024, 5, 1))
    close = _segment(["a"], ["b"], start=0, end=45)
    blowout = _segment(["a"], ["b"], start=45, end=90, pre_segment_score_diff=-3)
    weights = segment_weights([close, blowout], settings)
    recency = time_weight((dt.date(2024, 5, 1) - DATE).days)
    assert weights[0] == pytest.approx(recency * 0.5)
    assert weights[1] == pytest.approx(recency * 0.5 * 0.5)


def test_plain_ratings_solve_the_ridge_normal_equations():
    gen = np.random.default_rng(5)
    players = [f"p{i}" for i in range(6)]
    segments = _random_segments(gen, players, 10)
    ridge = 2.0
    model = fit_pm_ratings(segments, ridge_strength=ridge, settings=PLAIN)

    X = np.zeros((len(segments), len(players)))
    y = np.empty(len(segments))
    for r, s in enumerate(segments):
        for p in s.home_lineup:
            X[r, players.index(p)] = 1.0
        for p in s.away_lineup:
            X[r, players.index(p)] = -1.0
        y[r] = s.goal_diff * 90.0 / s.duration
    expected = np.linalg.solve(X.T @ X + ridge * np.eye(len(players)), X.T @ y)
    fitted = np.array([model.player_ratings[p] for p in players])
    np.testing.assert_allclose(fitted, expected, rtol=0, atol=1e-8)


def test_response_is_goal_difference_per_ninety_minutes():
    segments = [
        _segment(["a"], ["b"], gh=1, start=0, end=30),
        _segment(["a"], ["b"], gaw=2, start=30, end=90),
    ]
    design = design_matrix(segments, PLAIN)
    np.testing.assert_allclose(design.y, [3.0, -3.0])


def test_swapping_sides_negates_ratings():
    gen = np.random.default_rng(8)
    players = [f"p{i}" for i in range(8)]
    segments = _random_segments(gen, players, 25)
    swapped = [
        s.model_copy(update={
            "home_lineup": s.away_lineup, "away_lineup": s.home_lineup,
            "goals_home": s.goals_away, "goals_away": s.goals_home,
        })
        for s in segments
    ]
    first = fit_pm_ratings(segments, settings=PLAIN)
    second = fit_pm_ratings(swapped, settings=PLAIN)
    for p, rating in first.player_ratings.items():
        assert second.player_ratings[p] == pytest.approx(-rating, abs=1e-10)


def test_flipping_every_result_negates_the_full_model(pm_roster):
    segments, roster = pm_roster
    flipped = [
        s.model_copy(update={"goals_home": s.goals_away, "goals_away": s.goals_home})
        for s in segments
    ]
    first = fit_pm_ratings(segments, roster)
    second = fit_pm_ratings(flipped, roster)
    for p, rating in first.player_ratings.items():
        assert second.player_ratings[p] == pytest.approx(-rating, abs=1e-9)
    for comp, effect in first.home_advantage.items():
        assert second.home_advantage[comp] == pytest.approx(-effect, abs=1e-9)


def test_ridge_shrinks_ratings():
    gen = np.random.default_rng(2)
    players = [f"p{i}" for i in range(10)]
    segments = _random_segments(gen, players, 40)
    norms = [
        np.linalg.norm(list(fit_pm_ratings(segments, ridge_strength=lam, settings=PLAIN)
                            .player_ratings.values()))
        for lam in (0.1, 1.0, 10.0, 100.0)
    ]
    assert all(a > b for a, b in zip(norms, norms[1:]))
    huge = fit_pm_ratings(segments, ridge_strength=1e12, settings=PLAIN)
    assert max(abs(v) for v in huge.player_ratings.values()) < 1e-8


def test_inseparable_players_need_a_ridge():
    segments = [
        _segment(["a", "b"], ["c"], 1, 0),
        _segment(["a", "b"], ["d"], 0, 0),
        _segment(["c"], ["a", "b"], 2, 1),
        _segment(["d"], ["c"], 1, 1),
    ]
    with pytest.raises(NumericalError, match="singular"):
        fit_pm_ratings(segments, ridge_strength=0.0, settings=PLAIN)
    model = fit_pm_ratings(segments, ridge_strength=1.0, settings=PLAIN)
    assert model.player_ratings["a"] == pytest.approx(model.player_ratings["b"])


@pytest.fixture
def pm_roster():
    gen = np.random.default_rng(13)
    leagues = ["ENG", "ESP", "GER"]
    roster = {
        f"p{i}": PlayerInfo(
            player=f"p{i}",
            birth_date=dt.date(1990, 1, 1) + dt.timedelta(days=int(gen.integers(0, 4000))),
            league=leagues[i % 3],
        )
        for i in range(40)
    }
    names = sorted(roster)
    segments = []
    for k in range(600):
        red_home, red_away = (int(v) for v in gen.choice(3, size=2, p=[0.8, 0.15, 0.05]))
        picked = gen.choice(names, size=22 - red_home - red_away, replace=False)
        neutral = bool(gen.random() < 0.25)
        duration = float(gen.uniform(15, 60))
        rate_home, rate_away = (1.3, 1.3) if neutral else (1.8, 0.8)
        segments.append(_segment(
            picked[: 11 - red_home], picked[11 - red_home:],
            int(gen.poisson(rate_home * duration / 90)), int(gen.poisson(rate_away * duration / 90)),
            start=0.0, end=duration, match_id=f"m{k}", red_home=red_home, red_away=red_away,
            competition="league" if k % 2 else "cup", neutral=neutral,
            match_date=DATE - dt.timedelta(days=int(gen.integers(0, 700))),
            pre_segment_score_diff=int(gen.integers(-3, 4)),
        ))
    return segments, roster


def test_full_model_estimates_covariates(pm_roster):
    segments, roster = pm_roster
    model = fit_pm_ratings(segments, roster)
    assert set(model.home_advantage) == {"cup", "league"}
    assert all(v > 0 for v in model.home_advantage.values())
    assert set(model.red_card_effects) == {"1", "2+"}
    assert set(model.competition_adjust) == {"ESP", "GER"}
    assert all(np.isfinite(model.age_coeffs))
    assert len(model.player_ratings) == 40


def test_adjustments_need_roster_metadata(pm_roster):
    segments, roster = pm_roster
    with pytest.raises(DataError, match="roster"):
        fit_pm_ratings(segments)
    partial = dict(list(roster.items())[:-1])
    with pytest.raises(DataError, match="p39"):
        fit_pm_ratings(segments, partial)


def test_red_cards_rescale_short_handed_lineups():
    settings = PLAIN.model_copy(update={"red_cards": True})
    design = design_matrix([_segment([f"h{i}" for i in range(10)], ["a"], red_home=1)], settings)
    row = design.X.toarray()[0]
    assert row[design.players.index("h0")] == pytest.approx(11 / 10)
    assert row[design.players.index("a")] == pytest.approx(-11.0)
    red = design.n_players + design.covariates.index("red:1")
    assert row[red] == -1.0


def test_teammate_targets_average_frequent_teammates():
    segments = [_segment(["a", "b"], ["c"], match_id=f"m{k}") for k in range(12)]
    design = design_matrix(segments, PLAIN)
    targets = teammate_targets(design, np.array([1.0, 2.0, 3.0]), min_segments=10)
    np.testing.assert_array_equal(targets, [2.0, 1.0, 0.0])
    sparse_targets = teammate_targets(design, np.array([1.0, 2.0, 3.0]), min_segments=13)
    np.testing.assert_array_equal(sparse_targets, [0.0, 0.0, 0.0])


def test_team_average_over_the_squad():
    segments = [_segment(["a"], ["b"], 1, 0), _segment(["b"], ["c"], 0, 0)]
    model = fit_pm_ratings(segments, settings=PLAIN)
    ratings = model.player_ratings
    summary = team_ave_pm(model, ["a", "b"], team="X")
    assert summary.ave_pm == pytest.approx((ratings["a"] + ratings["b"]) / 2)
    with pytest.raises(DataError, match="z"):
        team_ave_pm(model, ["a", "z"])
    with pytest.raises(DataError, match="empty"):
        team_ave_pm(model, [])
