from __future__ import annotations

import math

import numpy as np
import pytest

from eurocast.errors import DataError, UsageError
from eurocast.simulator import (
    STAGES,
    TournamentSimulator,
    intensity_matrix,
    run_tournament_mc,
    simulate_group_stage,
    simulate_knockout,
)


class LinearModel:
    """Expected goals grow with the first feature difference."""

    def predict(self, X):
        X = np.atleast_2d(X)
        return np.exp(0.1 + 0.4 * X[:, 0])


def scripted_sampler(scores):
    """Fixed results for listed pairs; otherwise the lower team index wins 1-0."""

    def sample(team_a, team_b, lam_a, lam_b, rng):
        ga = np.empty(len(team_a), dtype=np.int64)
        gb = np.empty(len(team_a), dtype=np.int64)
        for k, (a, b) in enumerate(zip(team_a, team_b)):
            if (a, b) in scores:
                ga[k], gb[k] = scores[(a, b)]
            elif (b, a) in scores:
                gb[k], ga[k] = scores[(b, a)]
            else:
                ga[k], gb[k] = (1, 0) if a < b else (0, 1)
        return ga, gb

    return sample


def test_identical_teams_have_uniform_chances(euro2024):
    replications = 100_000
    simulator = TournamentSimulator(euro2024, np.full((24, 24), 1.3))
    report = simulator.run(replications, seed=1, threads=1)

    champion = report.probability("champion")
    se = math.sqrt((1 / 24) * (23 / 24) / replications)
    assert np.max(np.abs(champion - 1 / 24)) < 4 * se
    assert report.counts[STAGES.index("champion")].sum() == replications
    assert math.fsum(champion) == pytest.approx(1.0, abs=1e-12)


def test_stage_counts_per_replication(euro2024):
    replications = 5_000
    simulator = TournamentSimulator(euro2024, np.full((24, 24), 1.1))
    report = simulator.run(replications, seed=3, chunk_size=1_000)
    expected = {"group_winner": 6, "r16": 16, "qf": 8, "sf": 4, "final": 2, "champion": 1}
    for stage, per_replication in expected.items():
        assert report.counts[STAGES.index(stage)].sum() == per_replication * replications
    # reaching a stage implies having reached the previous one
    knockout = report.counts[1:]
    assert np.all(knockout[:-1] >= knockout[1:])


def test_runs_are_reproducible_and_worker_independent(euro2024):
    simulator = TournamentSimulator(euro2024, np.full((24, 24), 1.2))
    first = simulator.run(4_000, seed=9, threads=1, chunk_size=1_000)
    second = simulator.run(4_000, seed=9, threads=2, chunk_size=1_000)
    other = simulator.run(4_000, seed=10, threads=1, chunk_size=1_000)
    assert np.array_equal(first.counts, second.counts)
    assert not np.array_equal(first.counts, other.counts)


def test_circular_tie_is_broken_by_goals_scored(euro2024, rng):
    # group A: A beats B, B beats C, C beats A, all 1-0; A-D 2-2, B-D 1-1, C-D 0-0
    scores = {(0, 1): (1, 0), (1, 2): (1, 0), (2, 0): (1, 0), (0, 3): (2, 2), (1, 3): (1, 1),
              (2, 3): (0, 0)}
    simulator = TournamentSimulator(euro2024, np.ones((24, 24)), sampler=scripted_sampler(scores))
    result = simulator.group_stage(1, rng)
    standings = result.standings(0)["A"]
    assert [s.team for s in standings] == ["Germany", "Scotland", "Hungary", "Switzerland"]
    assert [s.points for s in standings] == [4, 4, 4, 3]
    assert [s.goals_for for s in standings] == [3, 2, 1, 3]


def test_round_of_16_holds_the_qualified_teams(euro2024, rng):
    simulator = TournamentSimulator(euro2024, rng.uniform(0.5, 2.5, size=(24, 24)))
    result = simulator.group_stage(2_000, rng)
    for rep in range(0, 2_000, 97):
        qualified = result.qualified[rep]
        assert len(set(qualified.tolist())) == 16
        top_two = set(result.ranked[rep, :, :2].ravel().tolist())
        thirds = set(result.ranked[rep, :, 2].tolist())
        assert top_two <= set(qualified.tolist())
        assert len(set(qualified.tolist()) & thirds) == 4


def test_third_place_bracket_follows_the_table(euro2024, rng):
    simulator = TournamentSimulator(euro2024, rng.uniform(0.5, 2.5, size=(24, 24)))
    result = simulator.group_stage(500, rng)
    slots = [s for tie in euro2024.bracket.round_of_16 for s in tie]
    opponents = euro2024.bracket.third_place_opponents
    group_of = {team: g for g, teams in euro2024.groups.items() for team in teams}
    for rep in range(0, 500, 23):
        qualified = result.qualified_teams(rep)
        thirds = {result.teams[result.ranked[rep, g, 2]] for g in range(6)}
        combo = "".join(sorted(group_of[t] for t in qualified if t in thirds))
        row = euro2024.bracket.third_place_table[combo]
        for winner, group in zip(opponents, row):
            assert group_of[qualified[slots.index(f"3/{winner}")]] == group


def test_knockout_draws_go_to_extra_time_then_lots(euro2024, rng):
    simulator = TournamentSimulator(euro2024, np.ones((24, 24)), sampler=lambda a, b, la, lb, r: (
        np.zeros(len(a), dtype=np.int64), np.zeros(len(a), dtype=np.int64)
    ))
    a = np.zeros(20_000, dtype=np.int64)
    b = np.ones(20_000, dtype=np.int64)
    winners = simulator.play_ties(a, b, rng)
    assert set(np.unique(winners).tolist()) == {0, 1}
    assert np.mean(winners == 0) == pytest.approx(0.5, abs=0.02)


def test_wrappers_drive_the_simulation_from_a_goal_model(euro2024, make_team_features, rng):
    features = {f.team: f for f in make_team_features(euro2024.teams)}
    matrix = intensity_matrix(LinearModel(), features, euro2024.teams)
    assert matrix.shape == (24, 24)
    assert np.all(matrix > 0)

    groups = simulate_group_stage(euro2024, LinearModel(), features, rng, replications=3)
    assert groups.qualified.shape == (3, 16)
    rounds = simulate_knockout(groups.qualified_teams(0), euro2024, LinearModel(), features, rng)
    assert [len(r) for r in rounds] == [16, 8, 4, 2, 1]

    report = run_tournament_mc(euro2024, LinearModel(), features, replications=2_000, seed=5)
    frame = report.to_frame()
    assert list(frame.columns) == ["team", "p_r16", "p_qf", "p_sf", "p_final", "p_champion"]
    assert len(frame) == 24
    assert frame["p_champion"].is_monotonic_decreasing
    assert report.to_frame(percent=True)["p_r16"].max() <= 100.0


def test_invalid_inputs(euro2024, make_team_features):
    with pytest.raises(UsageError):
        TournamentSimulator(euro2024, np.ones((24, 24))).run(0, seed=0)
    with pytest.raises(DataError):
        TournamentSimulator(euro2024, np.ones((23, 23)))
    features = {f.team: f for f in make_team_features(euro2024.teams[:-1])}
    with pytest.raises(DataError, match="no feature vector"):
        intensity_matrix(LinearModel(), features, euro2024.teams)
