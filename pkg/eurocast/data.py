"""CSV/TOML ingestion and the paired feature-difference dataset.

Every loader validates rows through the pydantic records in :mod:`eurocast.models` and
fails the whole load with a :class:`~eurocast.errors.DataError` naming the file and the
1-based data row.
"""

from __future__ import annotations

import logging
import sys
if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - Python 3.10 fallback
    import tomli as tomllib
from collections import OrderedDict
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, Type, TypeVar

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from . import seed_loader
from .errors import DataError
from .models import (
    FEATURE_NAMES,
    FeatureDiffRow,
    MatchRecord,
    OddsSheet,
    TeamFeatureVector,
    ThreeWayOdds,
    TournamentConfig,
)

logger = logging.getLogger(__name__)

MATCH_COLUMNS = ["date", "home", "away", "goals_home", "goals_away", "country", "neutral", "match_type"]
FEATURE_COLUMNS = [
    "year", "team", "gdp_log", "market_value_log", "fifa_rank", "uefa_points", "cl_players",
    "hist_ability", "logability", "ave_pm",
]
ODDS_COLUMNS = ["bookmaker", "team", "quoted_odds"]
THREE_WAY_COLUMNS = ["year", "home", "away", "odds_home", "odds_draw", "odds_away"]
DIFF_COLUMNS = ["year", "match_id", "team", "opponent", "goals", *FEATURE_NAMES]

R = TypeVar("R", bound=BaseModel)


class TeamRegistry:
    """Maps display names and flag codes onto the case-sensitive team keys."""

    def __init__(self, aliases: Optional[Mapping[str, str]] = None) -> None:
        self._aliases: dict[str, str] = {}
        for alias, team in (aliases or {}).items():
            self.add(alias, team)

    def add(self, alias: str, team: str) -> None:
        existing = self._aliases.get(alias)
        if existing is not None and existing != team:
            raise DataError(f"alias {alias!r} already maps to {existing!r}")
        self._aliases[alias] = team
        self._aliases.setdefault(team, team)

    def canonical(self, name: str) -> str:
        return self._aliases.get(name.strip(), name.strip())

    def __contains__(self, name: str) -> bool:
        return name.strip() in self._aliases

    def __len__(self) -> int:
        return len(set(self._aliases.values()))


def read_table(
    path: Path | str, required: Sequence[str], optional: Sequence[str] = ()
) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: file not found")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"{path}: missing header row") from exc
    columns = [c.strip() for c in frame.columns]
    frame.columns = columns
    if columns[: len(required)] != list(required) or any(
        c not in optional for c in columns[len(required):]
    ):
        raise DataError(f"{path}: header {columns} does not match schema {list(required)}")
    return frame


def parse_rows(path: Path | str, frame: pd.DataFrame, record: Type[R], build) -> list[R]:
    out: list[R] = []
    for index, raw in enumerate(frame.to_dict(orient="records"), start=1):
        try:
            out.append(record.model_validate(build(raw)))
        except ValidationError as exc:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
            )
            raise DataError(f"{path}: row {index}: {problems}") from exc
        except ValueError as exc:
            raise DataError(f"{path}: row {index}: {exc}") from exc
    return out


def load_matches(path: Path | str, registry: Optional[TeamRegistry] = None) -> list[MatchRecord]:
    frame = read_table(path, MATCH_COLUMNS, optional=("edition",))
    name = registry.canonical if registry else str.strip

    def build(raw: dict[str, str]) -> dict[str, Any]:
        return {
            "date": raw["date"],
            "home_team": name(raw["home"]),
            "away_team": name(raw["away"]),
            "goals_home": raw["goals_home"],
            "goals_away": raw["goals_away"],
            "venue_country": name(raw["country"]),
            "neutral": raw["neutral"],
            "match_type": raw["match_type"],
            "edition": raw.get("edition") or None,
        }

    matches = parse_rows(path, frame, MatchRecord, build)
    logger.info("loaded %d matches from %s", len(matches), path)
    return matches


def write_matches(path: Path | str, matches: Iterable[MatchRecord]) -> None:
    matches = list(matches)
    with_edition = any(m.edition is not None for m in matches)
    rows = []
    for m in matches:
        row = [
            m.date.isoformat(), m.home_team, m.away_team, str(m.goals_home), str(m.goals_away),
            m.venue_country, "yes" if m.neutral else "no", m.match_type.value,
        ]
        if with_edition:
            row.append("" if m.edition is None else str(m.edition))
        rows.append(row)
    columns = MATCH_COLUMNS + (["edition"] if with_edition else [])
    pd.DataFrame(rows, columns=columns, dtype=str).to_csv(path, index=False)


def load_features(
    path: Path | str, registry: Optional[TeamRegistry] = None
) -> list[TeamFeatureVector]:
    frame = read_table(path, FEATURE_COLUMNS)
    name = registry.canonical if registry else str.strip

    def build(raw: dict[str, str]) -> dict[str, Any]:
        data = {k: (v if v != "" else None) for k, v in raw.items()}
        data["tournament_year"] = data.pop("year")
        data["team"] = name(raw["team"])
        return data

    features = parse_rows(path, frame, TeamFeatureVector, build)
    seen: set[tuple[int, str]] = set()
    for index, fv in enumerate(features, start=1):
        key = (fv.tournament_year, fv.team)
        if key in seen:
            raise DataError(f"{path}: row {index}: duplicate features for {fv.team} {fv.tournament_year}")
        seen.add(key)
    return features


def write_features(path: Path | str, features: Iterable[TeamFeatureVector]) -> None:
    rows = [
        [
            str(f.tournament_year), f.team, repr(f.gdp_log), repr(f.market_value_log),
            str(f.fifa_rank), repr(f.uefa_points), repr(f.cl_players), repr(f.hist_ability),
            repr(f.logability), repr(f.ave_pm),
        ]
        for f in features
    ]
    pd.DataFrame(rows, columns=FEATURE_COLUMNS, dtype=str).to_csv(path, index=False)


def load_odds(path: Path | str, registry: Optional[TeamRegistry] = None) -> list[OddsSheet]:
    frame = read_table(path, ODDS_COLUMNS)
    name = registry.canonical if registry else str.strip
    books: "OrderedDict[str, dict[str, float]]" = OrderedDict()
    for index, raw in enumerate(frame.to_dict(orient="records"), start=1):
        try:
            quoted = float(raw["quoted_odds"])
        except ValueError as exc:
            raise DataError(f"{path}: row {index}: quoted_odds {raw['quoted_odds']!r}") from exc
        if not quoted > 1.0:
            raise DataError(f"{path}: row {index}: quoted odds must exceed 1, got {quoted}")
        entries = books.setdefault(raw["bookmaker"].strip(), {})
        team = name(raw["team"])
        if team in entries:
            raise DataError(f"{path}: row {index}: {raw['bookmaker']} quotes {team} twice")
        entries[team] = quoted
    return [OddsSheet(bookmaker=b, entries=e) for b, e in books.items()]


def load_three_way_odds(
    path: Path | str, registry: Optional[TeamRegistry] = None
) -> dict[tuple[int, str, str], tuple[float, float, float]]:
    """Pre-match 1X2 odds keyed by (tournament year, home, away)."""
    frame = read_table(path, THREE_WAY_COLUMNS)
    name = registry.canonical if registry else str.strip
    rows = parse_rows(
        path, frame, ThreeWayOdds,
        lambda raw: {**raw, "home": name(raw["home"]), "away": name(raw["away"])},
    )
    return {(r.year, r.home, r.away): r.as_tuple() for r in rows}


def _tournament_toml(source: Path | str) -> dict[str, Any]:
    path = Path(source)
    if not path.is_file():
        return seed_loader.load_bundled_tournament(str(source))
    with path.open("rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise DataError(f"{path}: {exc}") from exc


def load_tournament(source: Path | str) -> TournamentConfig:
    """Load a tournament config from a TOML file or by bundled name (e.g. ``euro2024``)."""
    return parse_tournament(_tournament_toml(source), origin=str(source))


def tournament_registry(source: Path | str) -> TeamRegistry:
    """Registry of the flag codes listed in a tournament config's ``[codes]`` table."""
    return TeamRegistry(_tournament_toml(source).get("codes", {}))


def parse_tournament(raw: Mapping[str, Any], origin: str = "<config>") -> TournamentConfig:
    try:
        return TournamentConfig.model_validate(raw)
    except ValidationError as exc:
        raise DataError(f"{origin}: invalid tournament config: {exc}") from exc


def feature_table(
    features: Iterable[TeamFeatureVector],
) -> dict[tuple[int, str], TeamFeatureVector]:
    return {(f.tournament_year, f.team): f for f in features}


def build_diff_rows(
    matches: Sequence[MatchRecord], features: Iterable[TeamFeatureVector]
) -> list[FeatureDiffRow]:
    """Two rows per match, each team's goals against the covariate difference to its opponent."""
    table = feature_table(features)
    rows: list[FeatureDiffRow] = []
    for match_id, match in enumerate(matches):
        year = match.tournament_year
        vectors = []
        for team in (match.home_team, match.away_team):
            fv = table.get((year, team))
            if fv is None:
                raise DataError(f"no feature vector for team {team!r} in tournament year {year}")
            vectors.append(fv.vector())
        diff = vectors[0] - vectors[1]
        rows.append(FeatureDiffRow(
            goals=match.goals_home, team=match.home_team, opponent=match.away_team,
            diff=tuple(float(v) for v in diff), tournament_year=year, match_id=match_id,
        ))
        rows.append(FeatureDiffRow(
            goals=match.goals_away, team=match.away_team, opponent=match.home_team,
            diff=tuple(float(v) for v in -diff), tournament_year=year, match_id=match_id,
        ))
    return rows


def rows_to_arrays(rows: Sequence[FeatureDiffRow]) -> tuple[np.ndarray, np.ndarray]:
    if not rows:
        return np.zeros((0, len(FEATURE_NAMES))), np.zeros(0)
    X = np.array([r.diff for r in rows], dtype=float)
    y = np.array([r.goals for r in rows], dtype=float)
    return X, y


def write_diff_rows(path: Path | str, rows: Iterable[FeatureDiffRow]) -> None:
    records = [
        [str(r.tournament_year), str(r.match_id), r.team, r.opponent, str(r.goals)]
        + [repr(v) for v in r.diff]
        for r in rows
    ]
    pd.DataFrame(records, columns=DIFF_COLUMNS, dtype=str).to_csv(path, index=False)


def load_diff_rows(path: Path | str) -> list[FeatureDiffRow]:
    frame = read_table(path, DIFF_COLUMNS)

    def build(raw: dict[str, str]) -> dict[str, Any]:
        return {
            "goals": raw["goals"],
            "team": raw["team"],
            "opponent": raw["opponent"],
            "diff": tuple(float(raw[name]) for name in FEATURE_NAMES),
            "tournament_year": raw["year"],
            "match_id": raw["match_id"],
        }

    return parse_rows(path, frame, FeatureDiffRow, build)
