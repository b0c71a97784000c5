from __future__ import annotations

import datetime as dt
import math
from enum import Enum
from itertools import combinations
from typing import Any, Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from sqlalchemy import JSON
from sqlmodel import Field as TableField
from sqlmodel import SQLModel

# Column order of every feature-difference vector: the three ability measures first,
# then the classical covariates.
FEATURE_NAMES: tuple[str, ...] = (
    "hist_ability",
    "logability",
    "ave_pm",
    "fifa_rank",
    "gdp_log",
    "market_value_log",
    "uefa_points",
    "cl_players",
)
N_FEATURES = len(FEATURE_NAMES)

GROUP_NAMES: tuple[str, ...] = ("A", "B", "C", "D", "E", "F")


class MatchType(str, Enum):
    world_cup = "world_cup"
    confederation_tournament = "confederation_tournament"
    qualifier = "qualifier"
    friendly_other = "friendly_other"


MATCH_TYPE_ALIASES: dict[str, MatchType] = {
    "world cup": MatchType.world_cup,
    "worldcup": MatchType.world_cup,
    "confederation": MatchType.confederation_tournament,
    "continental": MatchType.confederation_tournament,
    "euro": MatchType.confederation_tournament,
    "qualification": MatchType.qualifier,
    "qualifying": MatchType.qualifier,
    "friendly": MatchType.friendly_other,
    "other": MatchType.friendly_other,
}


class Record(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False, str_strip_whitespace=True)


class MatchRecord(Record):
    date: dt.date
    home_team: str = Field(min_length=1)
    away_team: str = Field(min_length=1)
    goals_home: int = Field(ge=0)
    goals_away: int = Field(ge=0)
    venue_country: str
    neutral: bool
    match_type: MatchType
    edition: Optional[int] = None

    @field_validator("match_type", mode="before")
    @classmethod
    def _alias_match_type(cls, value: Any) -> Any:
        if isinstance(value, str):
            key = value.strip().lower().replace("_", " ")
            if key in MATCH_TYPE_ALIASES:
                return MATCH_TYPE_ALIASES[key]
            return key.replace(" ", "_")
        return value

    @property
    def tournament_year(self) -> int:
        return self.edition if self.edition is not None else self.date.year


class TeamFeatureVector(Record):
    tournament_year: int
    team: str = Field(min_length=1)
    gdp_log: float
    market_value_log: float
    fifa_rank: int = Field(ge=1)
    uefa_points: float
    cl_players: float = Field(ge=0)
    hist_ability: float
    logability: float
    ave_pm: float

    def vector(self) -> np.ndarray:
        return np.array([float(getattr(self, name)) for name in FEATURE_NAMES])


class FeatureDiffRow(Record):
    goals: int = Field(ge=0)
    team: str
    opponent: str
    diff: tuple[float, ...]
    tournament_year: int
    match_id: int = Field(ge=0)

    @field_validator("diff")
    @classmethod
    def _eight_features(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if len(value) != N_FEATURES:
            raise ValueError(f"diff must have {N_FEATURES} entries, got {len(value)}")
        return value


class OddsSheet(Record):
    bookmaker: str = Field(min_length=1)
    entries: Dict[str, float]

    @field_validator("entries")
    @classmethod
    def _odds_return_stake(cls, value: Dict[str, float]) -> Dict[str, float]:
        for team, odds in value.items():
            if not math.isfinite(odds) or odds <= 1.0:
                raise ValueError(f"quoted odds for {team} must exceed 1, got {odds}")
        return value


class ThreeWayOdds(Record):
    """Pre-match decimal odds on home win, draw and away win."""

    year: int
    home: str = Field(min_length=1)
    away: str = Field(min_length=1)
    odds_home: float = Field(gt=1)
    odds_draw: float = Field(gt=1)
    odds_away: float = Field(gt=1)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.odds_home, self.odds_draw, self.odds_away)


def third_place_slot(winner_slot: str) -> str:
    return f"3/{winner_slot}"


class BracketSpec(Record):
    """Round-of-16 pairings in bracket order: winners of adjacent ties meet next round."""

    round_of_16: list[tuple[str, str]]
    third_place_opponents: list[str]
    third_place_table: Dict[str, list[str]]

    @model_validator(mode="after")
    def _check_bracket(self) -> "BracketSpec":
        if len(self.round_of_16) != 8:
            raise ValueError("round_of_16 must list 8 ties")
        if len(self.third_place_opponents) != 4:
            raise ValueError("exactly four group winners face third-placed teams")

        slots = [slot for tie in self.round_of_16 for slot in tie]
        expected = {f"{pos}{g}" for pos in "12" for g in GROUP_NAMES}
        expected |= {third_place_slot(w) for w in self.third_place_opponents}
        if sorted(slots) != sorted(expected):
            raise ValueError(f"round_of_16 must use each slot once: {sorted(expected)}")
        for a, b in self.round_of_16:
            if a[1:] == b[1:] and a[0] in "12" and b[0] in "12":
                raise ValueError(f"tie {a}-{b} pairs teams of the same group")

        wanted = {"".join(c) for c in combinations(GROUP_NAMES, 4)}
        if set(self.third_place_table) != wanted:
            missing = sorted(wanted - set(self.third_place_table))
            raise ValueError(f"third_place_table must cover all 15 combinations; missing {missing}")
        for combo, row in self.third_place_table.items():
            if sorted(row) != sorted(combo):
                raise ValueError(f"third_place_table[{combo}] must use groups {combo} once each")
            for winner, group in zip(self.third_place_opponents, row):
                if winner[1:] == group:
                    raise ValueError(f"third_place_table[{combo}] pairs {winner} with its own group")
        return self


class TournamentConfig(Record):
    year: int
    groups: Dict[str, list[str]]
    bracket: BracketSpec

    @model_validator(mode="after")
    def _check_groups(self) -> "TournamentConfig":
        if sorted(self.groups) != list(GROUP_NAMES):
            raise ValueError(f"groups must be named {', '.join(GROUP_NAMES)}")
        teams = [t for g in GROUP_NAMES for t in self.groups[g]]
        if any(len(self.groups[g]) != 4 for g in GROUP_NAMES):
            raise ValueError("every group has exactly 4 teams")
        if len(set(teams)) != 24:
            raise ValueError("24 distinct teams are required, each in exactly one group")
        return self

    @property
    def teams(self) -> list[str]:
        return [t for g in GROUP_NAMES for t in self.groups[g]]


class PipelineManifest(BaseModel):
    command: str
    argv: list[str]
    inputs: Dict[str, str] = Field(default_factory=dict)
    seed: Optional[int] = None
    threads: int = 1
    tuning: Dict[str, Any] = Field(default_factory=dict)
    weights: Optional[list[float]] = None
    model_hashes: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)
    tool_version: str


class PipelineRun(SQLModel, table=True):
    id: Optional[int] = TableField(default=None, primary_key=True)
    command: str = TableField(index=True)
    seed: Optional[int] = None
    primary_output_hash: Optional[str] = None
    created_at: dt.datetime = TableField(
        default_factory=lambda: dt.datetime.now(dt.timezone.utc), index=True
    )
    # Full manifest as JSON (SQLite stores it as TEXT)
    manifest: Dict[str, Any] = TableField(
        default_factory=dict, sa_type=JSON, sa_column_kwargs={"nullable": False}
    )
