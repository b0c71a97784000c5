from __future__ import annotations

import numpy as np
import pytest

from eurocast import database, settings
from eurocast.data import load_tournament
from eurocast.models import N_FEATURES, FeatureDiffRow, TeamFeatureVector, TournamentConfig


@pytest.fixture(autouse=True)
def isolated_ledger(tmp_path, monkeypatch):
    monkeypatch.setenv("EUROCAST_LEDGER_URL", f"sqlite:///{tmp_path / 'ledger.db'}")
    settings.get_settings.cache_clear()
    database.get_engine.cache_clear()
    yield
    settings.get_settings.cache_clear()
    database.get_engine.cache_clear()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240614)


@pytest.fixture(scope="session")
def euro2024() -> TournamentConfig:
    return load_tournament("euro2024")


@pytest.fixture
def make_diff_rows():
    """Paired rows whose goals follow ``exp(0.1 + 0.5·d0 + 0.2·d3)``."""

    def build(years=(2008, 2012, 2016), matches_per_year=30, seed=0) -> list[FeatureDiffRow]:
        gen = np.random.default_rng(seed)
        rows = []
        for year in years:
            for match_id in range(matches_per_year):
                diff = gen.normal(0.0, 1.0, N_FEATURES)
                lam1 = np.exp(0.1 + 0.5 * diff[0] + 0.2 * diff[3])
                lam2 = np.exp(0.1 - 0.5 * diff[0] - 0.2 * diff[3])
                for team, opponent, d, lam in (("T1", "T2", diff, lam1), ("T2", "T1", -diff, lam2)):
                    rows.append(FeatureDiffRow(
                        goals=int(gen.poisson(lam)), team=f"{team}-{match_id}",
                        opponent=f"{opponent}-{match_id}", diff=tuple(float(v) for v in d),
                        tournament_year=year, match_id=match_id,
                    ))
        return rows

    return build


@pytest.fixture
def make_team_features():
    def build(teams, year=2024, seed=0) -> list[TeamFeatureVector]:
        gen = np.random.default_rng(seed)
        return [
            TeamFeatureVector(
                tournament_year=year, team=team, gdp_log=float(gen.normal(10, 1)),
                market_value_log=float(gen.normal(19, 1)), fifa_rank=rank,
                uefa_points=float(gen.uniform(10, 40)), cl_players=float(gen.integers(0, 12)),
                hist_ability=float(gen.normal(0, 0.3)), logability=float(gen.normal(0, 0.5)),
                ave_pm=float(gen.normal(0, 0.1)),
            )
            for rank, team in enumerate(teams, start=1)
        ]

    return build
