"""Monte Carlo simulation of the 24-team EURO format.

One replication plays the 36 group matches, ranks every group, picks the four best
third-placed teams, fills the round of 16 from the bracket and plays the knockout tree
(90 minutes, then extra time at a third of the intensities, then a coin toss). All
replications of a chunk are simulated at once as numpy arrays.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .errors import DataError, UsageError
from .match_prob import INTENSITY_FLOOR
from .models import GROUP_NAMES, TeamFeatureVector, TournamentConfig, third_place_slot
from .predictors import GoalModel

logger = logging.getLogger(__name__)

STAGES: tuple[str, ...] = ("group_winner", "r16", "qf", "sf", "final", "champion")
GROUP_PAIRS: tuple[tuple[int, int], ...] = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

# sampler(team_a, team_b, lam_a, lam_b, rng) -> (goals_a, goals_b), all arrays of one length
Sampler = Callable[
    [np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.random.Generator],
    tuple[np.ndarray, np.ndarray],
]


def poisson_sampler(
    team_a: np.ndarray, team_b: np.ndarray, lam_a: np.ndarray, lam_b: np.ndarray,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    return rng.poisson(lam_a), rng.poisson(lam_b)


def intensity_matrix(
    model: GoalModel,
    features: Mapping[str, TeamFeatureVector | np.ndarray],
    teams: Sequence[str],
    floor: float = INTENSITY_FLOOR,
) -> np.ndarray:
    """``L[i, j]`` = expected goals of ``teams[i]`` against ``teams[j]``."""
    missing = [t for t in teams if t not in features]
    if missing:
        raise DataError(f"no feature vector for {', '.join(missing)}")
    vectors = np.array([
        f.vector() if isinstance(f, TeamFeatureVector) else np.asarray(f, dtype=float)
        for f in (features[t] for t in teams)
    ])
    n = len(teams)
    i, j = np.where(~np.eye(n, dtype=bool))
    out = np.full((n, n), floor)
    out[i, j] = np.maximum(np.asarray(model.predict(vectors[i] - vectors[j]), dtype=float), floor)
    return out


@dataclass(frozen=True)
class GroupStanding:
    team: str
    points: int
    goal_diff: int
    goals_for: int
    h2h: tuple[int, int, int]  # points, goal difference, goals among teams level on points


@dataclass(frozen=True)
class GroupStageResult:
    teams: tuple[str, ...]
    ranked: np.ndarray  # (R, 6, 4) team indices, group winner first
    points: np.ndarray  # the rest aligned with ``ranked``
    goal_diff: np.ndarray
    goals_for: np.ndarray
    h2h: np.ndarray  # (R, 6, 4, 3)
    qualified: np.ndarray  # (R, 16) round-of-16 slots in bracket order

    def standings(self, replication: int = 0) -> dict[str, list[GroupStanding]]:
        out: dict[str, list[GroupStanding]] = {}
        for g, name in enumerate(GROUP_NAMES):
            out[name] = [
                GroupStanding(
                    team=self.teams[self.ranked[replication, g, k]],
                    points=int(self.points[replication, g, k]),
                    goal_diff=int(self.goal_diff[replication, g, k]),
                    goals_for=int(self.goals_for[replication, g, k]),
                    h2h=tuple(int(v) for v in self.h2h[replication, g, k]),
                )
                for k in range(4)
            ]
        return out

    def qualified_teams(self, replication: int = 0) -> list[str]:
        return [self.teams[i] for i in self.qualified[replication]]


@dataclass(frozen=True)
class StageReport:
    teams: tuple[str, ...]
    counts: np.ndarray  # (len(STAGES), n_teams)
    replications: int
    seed: int

    def probability(self, stage: str) -> np.ndarray:
        return self.counts[STAGES.index(stage)] / self.replications

    def to_frame(self, percent: bool = False) -> pd.DataFrame:
        scale = 100.0 if percent else 1.0
        frame = pd.DataFrame({"team": list(self.teams)})
        for stage in STAGES[1:]:
            frame[f"p_{stage}"] = self.probability(stage) * scale
        return frame.sort_values(
            ["p_champion", "p_final", "p_sf", "p_qf", "p_r16", "team"],
            ascending=[False] * 5 + [True],
            kind="mergesort",
        ).reset_index(drop=True)


class TournamentSimulator:
    def __init__(
        self,
        config: TournamentConfig,
        intensities: np.ndarray,
        sampler: Optional[Sampler] = None,
    ) -> None:
        self.config = config
        self.teams = tuple(config.teams)
        if intensities.shape != (24, 24):
            raise DataError(f"intensity matrix must be 24x24, got {intensities.shape}")
        self.intensities = np.maximum(np.asarray(intensities, dtype=float), INTENSITY_FLOOR)
        self.sampler = sampler or poisson_sampler
        self._group_index = np.arange(24).reshape(6, 4)
        self._third_rows = self._third_place_lookup()
        self._slots = [self._parse_slot(s) for tie in config.bracket.round_of_16 for s in tie]

    def _third_place_lookup(self) -> np.ndarray:
        table = np.full((1 << 6, 4), -1, dtype=np.int64)
        for combo, row in self.config.bracket.third_place_table.items():
            mask = sum(1 << GROUP_NAMES.index(g) for g in combo)
            table[mask] = [GROUP_NAMES.index(g) for g in row]
        return table

    def _parse_slot(self, slot: str) -> tuple[str, int, int]:
        opponents = self.config.bracket.third_place_opponents
        for k, winner in enumerate(opponents):
            if slot == third_place_slot(winner):
                return ("third", k, 0)
        return ("group", GROUP_NAMES.index(slot[1]), int(slot[0]) - 1)

    def _sample(
        self, a: np.ndarray, b: np.ndarray, rng: np.random.Generator, scale: float = 1.0
    ) -> tuple[np.ndarray, np.ndarray]:
        lam_a = self.intensities[a, b] * scale
        lam_b = self.intensities[b, a] * scale
        ga, gb = self.sampler(a, b, lam_a, lam_b, rng)
        return np.asarray(ga, dtype=np.int64), np.asarray(gb, dtype=np.int64)

    def _play_group(self, group: int, replications: int, rng: np.random.Generator):
        idx = self._group_index[group]
        goals = np.zeros((replications, 4, 4), dtype=np.int64)
        for a, b in GROUP_PAIRS:
            ga, gb = self._sample(
                np.full(replications, idx[a]), np.full(replications, idx[b]), rng
            )
            goals[:, a, b] = ga
            goals[:, b, a] = gb

        played = ~np.eye(4, dtype=bool)
        against = goals.transpose(0, 2, 1)
        match_points = np.where(goals > against, 3, np.where(goals == against, 1, 0)) * played
        points = match_points.sum(axis=2)
        goals_for = goals.sum(axis=2)
        goal_diff = goals_for - against.sum(axis=2)

        level = (points[:, :, None] == points[:, None, :]) & played
        h2h = np.stack([
            (match_points * level).sum(axis=2),
            ((goals - against) * level).sum(axis=2),
            (goals * level).sum(axis=2),
        ], axis=-1)
        lots = rng.random((replications, 4))
        order = np.lexsort(
            (-lots, -goals_for, -goal_diff, -h2h[..., 2], -h2h[..., 1], -h2h[..., 0], -points),
            axis=-1,
        )
        take = lambda arr: np.take_along_axis(arr, order, axis=1)  # noqa: E731
        h2h_ranked = np.take_along_axis(h2h, order[..., None], axis=1)
        return idx[order], take(points), take(goal_diff), take(goals_for), h2h_ranked

    def group_stage(self, replications: int, rng: np.random.Generator) -> GroupStageResult:
        parts = [self._play_group(g, replications, rng) for g in range(6)]
        ranked, points, goal_diff, goals_for, h2h = (np.stack(p, axis=1) for p in zip(*parts))

        third_pts, third_gd, third_gf = points[:, :, 2], goal_diff[:, :, 2], goals_for[:, :, 2]
        lots = rng.random((replications, 6))
        order = np.lexsort((-lots, -third_gf, -third_gd, -third_pts), axis=-1)
        best = order[:, :4]
        mask = (1 << best).sum(axis=1)
        assigned = self._third_rows[mask]  # (R, 4) groups facing third_place_opponents[k]

        rows = np.arange(replications)
        qualified = np.empty((replications, 16), dtype=np.int64)
        for s, (kind, a, b) in enumerate(self._slots):
            if kind == "group":
                qualified[:, s] = ranked[:, a, b]
            else:
                qualified[:, s] = ranked[rows, assigned[:, a], 2]
        return GroupStageResult(
            teams=self.teams, ranked=ranked, points=points, goal_diff=goal_diff,
            goals_for=goals_for, h2h=h2h, qualified=qualified,
        )

    def play_ties(self, a: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        ga, gb = self._sample(a, b, rng)
        ea, eb = self._sample(a, b, rng, scale=1.0 / 3.0)
        coin = rng.random(a.shape[0]) < 0.5
        a_wins = (ga > gb) | ((ga == gb) & ((ea > eb) | ((ea == eb) & coin)))
        return np.where(a_wins, a, b)

    def knockout(self, qualified: np.ndarray, rng: np.random.Generator) -> list[np.ndarray]:
        """Survivors per knockout stage: 16, 8, 4, 2 and 1 teams per replication."""
        rounds = [qualified]
        current = qualified
        while current.shape[1] > 1:
            a, b = current[:, 0::2], current[:, 1::2]
            current = self.play_ties(a.ravel(), b.ravel(), rng).reshape(a.shape)
            rounds.append(current)
        return rounds

    def simulate_counts(self, replications: int, rng: np.random.Generator) -> np.ndarray:
        groups = self.group_stage(replications, rng)
        rounds = self.knockout(groups.qualified, rng)
        counts = np.zeros((len(STAGES), 24), dtype=np.int64)
        counts[0] = np.bincount(groups.ranked[:, :, 0].ravel(), minlength=24)
        for stage, survivors in enumerate(rounds, start=1):
            counts[stage] = np.bincount(survivors.ravel(), minlength=24)
        return counts

    def run(
        self, replications: int, seed: int, threads: int = 1, chunk_size: int = 10_000
    ) -> StageReport:
        if replications <= 0:
            raise UsageError(f"replications must be positive, got {replications}")
        sizes = [
            min(chunk_size, replications - start) for start in range(0, replications, chunk_size)
        ]
        chunks = Parallel(n_jobs=threads)(
            delayed(_simulate_chunk)(self, size, seed, index) for index, size in enumerate(sizes)
        )
        counts = np.sum(chunks, axis=0)
        logger.debug("simulated %d replications in %d chunks", replications, len(sizes))
        return StageReport(teams=self.teams, counts=counts, replications=replications, seed=seed)


def _simulate_chunk(
    simulator: TournamentSimulator, size: int, seed: int, index: int
) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    return simulator.simulate_counts(size, rng)


def simulate_group_stage(
    config: TournamentConfig,
    model: GoalModel,
    features: Mapping[str, TeamFeatureVector | np.ndarray],
    rng: np.random.Generator,
    replications: int = 1,
    sampler: Optional[Sampler] = None,
) -> GroupStageResult:
    simulator = TournamentSimulator(
        config, intensity_matrix(model, features, config.teams), sampler=sampler
    )
    return simulator.group_stage(replications, rng)


def simulate_knockout(
    qualified: Sequence[str] | np.ndarray,
    config: TournamentConfig,
    model: GoalModel,
    features: Mapping[str, TeamFeatureVector | np.ndarray],
    rng: np.random.Generator,
    sampler: Optional[Sampler] = None,
) -> list[list[str]]:
    """Play one knockout tree from 16 team names in bracket order."""
    simulator = TournamentSimulator(
        config, intensity_matrix(model, features, config.teams), sampler=sampler
    )
    index = {t: i for i, t in enumerate(simulator.teams)}
    start = np.array([[index[t] for t in qualified]])
    if start.shape != (1, 16):
        raise DataError(f"the knockout stage needs 16 teams, got {start.shape[1]}")
    return [[simulator.teams[i] for i in survivors[0]] for survivors in simulator.knockout(start, rng)]


def run_tournament_mc(
    config: TournamentConfig,
    model: GoalModel,
    features: Mapping[str, TeamFeatureVector | np.ndarray],
    replications: int = 100_000,
    seed: int = 0,
    threads: int = 1,
    chunk_size: int = 10_000,
    sampler: Optional[Sampler] = None,
) -> StageReport:
    simulator = TournamentSimulator(
        config, intensity_matrix(model, features, config.teams), sampler=sampler
    )
    report = simulator.run(replications, seed, threads=threads, chunk_size=chunk_size)
    logger.info("simulated %d tournaments (seed %d)", replications, seed)
    return report
