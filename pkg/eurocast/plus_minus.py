"""Player plus-minus ratings from club match segments.

A segment is a stretch of a match during which the players on the pitch do not change.
Ratings come from a weighted ridge regression of each segment's goal difference per 90
minutes (home minus away) on signed on-pitch indicators plus home, red-card, club-league
and age covariates; only the player coefficients are penalised.
"""

from __future__ import annotations

import datetime as dt
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import sparse
from scipy.sparse.linalg import cg

from .data import parse_rows, read_table
from .errors import ConvergenceError, DataError, NumericalError
from .hist_ability import DEFAULT_HALF_PERIOD_DAYS, time_weight
from .models import Record

logger = logging.getLogger(__name__)

PITCH_SIZE = 11
MINUTES = 90.0
REFERENCE_AGE = 27.0


class EventType(str, Enum):
    red_card = "red_card"
    sub_off = "sub_off"
    sub_on = "sub_on"
    goal = "goal"
    full_time = "full_time"


# order of events sharing a minute
EVENT_PRIORITY = {
    EventType.red_card: 0,
    EventType.sub_off: 1,
    EventType.sub_on: 2,
    EventType.goal: 3,
    EventType.full_time: 4,
}


class MatchEvent(Record):
    match_id: str = Field(min_length=1)
    minute: float = Field(ge=0)
    event_type: EventType
    player: Optional[str] = None
    team: str = ""

    @model_validator(mode="after")
    def _player_required(self) -> "MatchEvent":
        if self.event_type in (EventType.red_card, EventType.sub_off, EventType.sub_on):
            if not self.player:
                raise ValueError(f"{self.event_type.value} events name a player")
        if self.event_type != EventType.full_time and not self.team:
            raise ValueError(f"{self.event_type.value} events name a team")
        return self


class PMMatch(Record):
    match_id: str = Field(min_length=1)
    date: dt.date
    home_team: str
    away_team: str
    competition: str
    neutral: bool = False


class PlayerInfo(Record):
    player: str = Field(min_length=1)
    birth_date: dt.date
    league: str


class SegmentRecord(Record):
    match_id: str
    start_min: float
    end_min: float
    home_lineup: frozenset[str]
    away_lineup: frozenset[str]
    red_home: int = Field(default=0, ge=0)
    red_away: int = Field(default=0, ge=0)
    goals_home: int = Field(default=0, ge=0)
    goals_away: int = Field(default=0, ge=0)
    competition: str
    match_date: dt.date
    pre_segment_score_diff: int = 0
    neutral: bool = False

    @field_validator("home_lineup", "away_lineup")
    @classmethod
    def _at_most_eleven(cls, value: frozenset[str]) -> frozenset[str]:
        if len(value) > PITCH_SIZE:
            raise ValueError(f"{len(value)} players on the pitch")
        return value

    @model_validator(mode="after")
    def _positive_length(self) -> "SegmentRecord":
        if not self.end_min > self.start_min:
            raise ValueError(f"segment [{self.start_min}, {self.end_min}] is empty")
        return self

    @property
    def duration(self) -> float:
        return self.end_min - self.start_min

    @property
    def goal_diff(self) -> int:
        return self.goals_home - self.goals_away


def load_events(path: Path | str) -> list[MatchEvent]:
    frame = read_table(path, ["match_id", "minute", "event_type", "player", "team"])
    return parse_rows(
        path, frame, MatchEvent,
        lambda raw: {**raw, "player": raw["player"] or None, "event_type": raw["event_type"].lower()},
    )


def load_lineups(path: Path | str) -> dict[tuple[str, str], list[str]]:
    frame = read_table(path, ["match_id", "team", "player"])
    out: dict[tuple[str, str], list[str]] = defaultdict(list)
    for raw in frame.to_dict(orient="records"):
        out[(raw["match_id"].strip(), raw["team"].strip())].append(raw["player"].strip())
    return dict(out)


def load_pm_matches(path: Path | str) -> dict[str, PMMatch]:
    frame = read_table(path, ["match_id", "date", "home", "away", "competition", "neutral"])
    matches = parse_rows(
        path, frame, PMMatch,
        lambda raw: {**raw, "home_team": raw["home"], "away_team": raw["away"]},
    )
    return {m.match_id: m for m in matches}


def load_players(path: Path | str) -> dict[str, PlayerInfo]:
    frame = read_table(path, ["player", "birth_date", "league"])
    return {p.player: p for p in parse_rows(path, frame, PlayerInfo, dict)}


def load_squads(path: Path | str) -> dict[str, list[str]]:
    frame = read_table(path, ["team", "player"])
    out: dict[str, list[str]] = defaultdict(list)
    for raw in frame.to_dict(orient="records"):
        out[raw["team"].strip()].append(raw["player"].strip())
    return dict(out)


def _match_segments(
    match: PMMatch, events: Sequence[MatchEvent], lineups: Mapping[tuple[str, str], list[str]]
) -> list[SegmentRecord]:
    sides = {match.home_team: 0, match.away_team: 1}
    on_pitch = []
    for team in (match.home_team, match.away_team):
        lineup = lineups.get((match.match_id, team))
        if lineup is None:
            raise DataError(f"match {match.match_id}: no line-up for {team}")
        if len(set(lineup)) > PITCH_SIZE:
            raise DataError(f"match {match.match_id}: {team} starts {len(set(lineup))} players")
        on_pitch.append(set(lineup))

    ordered = sorted(events, key=lambda e: (e.minute, EVENT_PRIORITY[e.event_type]))
    end = next((e.minute for e in ordered if e.event_type == EventType.full_time), None)
    if end is None:
        end = max([MINUTES] + [e.minute for e in ordered])

    segments: list[SegmentRecord] = []
    start, goals, reds, score = 0.0, [0, 0], [0, 0], [0, 0]
    start_score_diff = 0

    def close(at: float) -> None:
        segments.append(SegmentRecord(
            match_id=match.match_id, start_min=start, end_min=at,
            home_lineup=frozenset(on_pitch[0]), away_lineup=frozenset(on_pitch[1]),
            red_home=reds[0], red_away=reds[1], goals_home=goals[0], goals_away=goals[1],
            competition=match.competition, match_date=match.date,
            pre_segment_score_diff=start_score_diff, neutral=match.neutral,
        ))

    for event in ordered:
        if event.event_type == EventType.full_time:
            continue
        if event.minute > end:
            raise DataError(f"match {match.match_id}: event at {event.minute}' after full time")
        side = sides.get(event.team)
        if side is None:
            raise DataError(f"match {match.match_id}: {event.team!r} does not play in this match")
        if event.event_type == EventType.goal:
            goals[side] += 1
            score[side] += 1
            continue
        if event.minute > start:
            close(event.minute)
            start, goals = event.minute, [0, 0]
            start_score_diff = score[0] - score[1]
        if event.event_type == EventType.sub_on:
            if event.player in on_pitch[side]:
                raise DataError(f"match {match.match_id}: {event.player} is already on the pitch")
            on_pitch[side].add(event.player)
        else:
            if event.player not in on_pitch[side]:
                raise DataError(
                    f"match {match.match_id}: {event.player} leaves at {event.minute}' "
                    "but is not on the pitch"
                )
            on_pitch[side].discard(event.player)
            if event.event_type == EventType.red_card:
                reds[side] += 1

    if end > start:
        close(end)
    elif goals != [0, 0]:
        if not segments:
            raise DataError(f"match {match.match_id}: goals in a match without playing time")
        # changes in the final minute leave no playing time; its goals stay with the last segment
        last = segments[-1]
        segments[-1] = last.model_copy(update={
            "goals_home": last.goals_home + goals[0], "goals_away": last.goals_away + goals[1],
        })
    return segments


def build_segments(
    events: Sequence[MatchEvent],
    lineups: Mapping[tuple[str, str], list[str]],
    matches: Mapping[str, PMMatch],
) -> list[SegmentRecord]:
    """Split every match at each change of the players on the pitch."""
    by_match: dict[str, list[MatchEvent]] = defaultdict(list)
    for event in events:
        if event.match_id not in matches:
            raise DataError(f"event for unknown match {event.match_id!r}")
        by_match[event.match_id].append(event)
    segments = []
    for match_id, match in matches.items():
        segments.extend(_match_segments(match, by_match.get(match_id, []), lineups))
    logger.info("built %d segments from %d matches", len(segments), len(matches))
    return segments


class PMSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    ridge_strength: float = Field(default=1.0, ge=0)
    half_period_days: float = Field(default=DEFAULT_HALF_PERIOD_DAYS, gt=0)
    reference_date: Optional[dt.date] = None
    recency_weight: bool = True
    duration_weight: bool = True
    game_state_weight: bool = True
    game_state_margin: int = 2
    game_state_factor: float = Field(default=0.5, gt=0, le=1)
    home_advantage: bool = True
    red_cards: bool = True
    league_adjust: bool = True
    reference_league: Optional[str] = None
    age_adjust: bool = True
    teammate_prior: bool = True
    teammate_min_segments: int = Field(default=10, ge=1)
    cg_rtol: float = 1e-12


def segment_weights(segments: Sequence[SegmentRecord], settings: PMSettings) -> np.ndarray:
    reference = settings.reference_date or max(s.match_date for s in segments)
    w = np.ones(len(segments))
    for i, s in enumerate(segments):
        if settings.recency_weight:
            w[i] *= time_weight((reference - s.match_date).days, settings.half_period_days)
        if settings.duration_weight:
            w[i] *= s.duration / MINUTES
        if settings.game_state_weight and abs(s.pre_segment_score_diff) >= settings.game_state_margin:
            w[i] *= settings.game_state_factor
    return w


@dataclass(frozen=True)
class PMDesign:
    X: sparse.csr_matrix
    y: np.ndarray
    w: np.ndarray
    players: tuple[str, ...]
    covariates: tuple[str, ...]
    home_pitch: sparse.csr_matrix
    away_pitch: sparse.csr_matrix

    @property
    def n_players(self) -> int:
        return len(self.players)


def _age(info: PlayerInfo, on: dt.date) -> float:
    return (on - info.birth_date).days / 365.25


def _mean(values: list[float]) -> float:
    return float(np.mean(values)) if values else 0.0


def design_matrix(
    segments: Sequence[SegmentRecord],
    settings: PMSettings,
    players: Optional[Mapping[str, PlayerInfo]] = None,
) -> PMDesign:
    if not segments:
        raise DataError("no segments to fit")
    names = sorted({p for s in segments for p in s.home_lineup | s.away_lineup})
    index = {p: i for i, p in enumerate(names)}
    needs_roster = settings.age_adjust or settings.league_adjust
    if needs_roster:
        if players is None:
            raise DataError("age and league adjustments need roster metadata")
        missing = [p for p in names if p not in players]
        if missing:
            raise DataError(f"no roster metadata for {', '.join(missing[:5])}")

    leagues: list[str] = []
    if settings.league_adjust:
        counts = Counter(players[p].league for p in names)
        reference = settings.reference_league or counts.most_common(1)[0][0]
        leagues = sorted(set(counts) - {reference})
    competitions = sorted({s.competition for s in segments}) if settings.home_advantage else []
    covariates = (
        [f"home:{c}" for c in competitions]
        + (["red:1", "red:2+"] if settings.red_cards else [])
        + [f"league:{lg}" for lg in leagues]
        + (["age", "age_sq"] if settings.age_adjust else [])
    )
    cov_index = {c: len(names) + k for k, c in enumerate(covariates)}

    rows, cols, vals = [], [], []
    home_rows, home_cols, away_rows, away_cols = [], [], [], []
    y = np.empty(len(segments))
    for r, s in enumerate(segments):
        y[r] = s.goal_diff * MINUTES / s.duration
        for lineup, sign, pr, pc in (
            (s.home_lineup, 1.0, home_rows, home_cols), (s.away_lineup, -1.0, away_rows, away_cols)
        ):
            scale = PITCH_SIZE / len(lineup) if settings.red_cards and lineup else 1.0
            for p in lineup:
                rows.append(r)
                cols.append(index[p])
                vals.append(sign * scale)
                pr.append(r)
                pc.append(index[p])
        extra: dict[str, float] = {}
        if settings.home_advantage and not s.neutral:
            extra[f"home:{s.competition}"] = 1.0
        if settings.red_cards:
            deficit = s.red_home - s.red_away
            if deficit:
                extra["red:1" if abs(deficit) == 1 else "red:2+"] = -float(np.sign(deficit))
        if leagues:
            for lg in leagues:
                n = sum(players[p].league == lg for p in s.home_lineup)
                n -= sum(players[p].league == lg for p in s.away_lineup)
                if n:
                    extra[f"league:{lg}"] = n / PITCH_SIZE
        if settings.age_adjust:
            home_age = [_age(players[p], s.match_date) - REFERENCE_AGE for p in s.home_lineup]
            away_age = [_age(players[p], s.match_date) - REFERENCE_AGE for p in s.away_lineup]
            extra["age"] = _mean(home_age) - _mean(away_age)
            extra["age_sq"] = _mean([a * a for a in home_age]) - _mean([a * a for a in away_age])
        for name, value in extra.items():
            rows.append(r)
            cols.append(cov_index[name])
            vals.append(value)

    shape = (len(segments), len(names) + len(covariates))
    X = sparse.csr_matrix((vals, (rows, cols)), shape=shape)
    pitch_shape = (len(segments), len(names))
    home = sparse.csr_matrix((np.ones(len(home_rows)), (home_rows, home_cols)), shape=pitch_shape)
    away = sparse.csr_matrix((np.ones(len(away_rows)), (away_rows, away_cols)), shape=pitch_shape)
    return PMDesign(
        X=X, y=y, w=segment_weights(segments, settings), players=tuple(names),
        covariates=tuple(covariates), home_pitch=home, away_pitch=away,
    )


@dataclass(frozen=True)
class PMRatingModel:
    player_ratings: dict[str, float]
    home_advantage: dict[str, float]
    competition_adjust: dict[str, float]
    red_card_effects: dict[str, float]
    age_coeffs: tuple[float, float]
    ridge_strength: float
    settings: PMSettings = field(repr=False, default_factory=PMSettings)


def _solve(
    design: PMDesign, ridge: float, targets: np.ndarray, rtol: float
) -> np.ndarray:
    X, w = design.X, design.w
    n_players = design.n_players
    penalty = np.zeros(X.shape[1])
    penalty[:n_players] = ridge
    A = (X.T @ sparse.diags(w) @ X + sparse.diags(penalty)).tocsr()
    b = X.T @ (w * design.y)
    b[:n_players] += ridge * targets

    # covariates are unpenalised: without a ridge every column must be identified
    check = X if ridge == 0 else X[:, n_players:]
    if check.shape[1]:
        weighted = sparse.diags(np.sqrt(w)) @ check
        rank = np.linalg.matrix_rank(weighted.toarray())
        if rank < check.shape[1]:
            raise NumericalError(
                f"plus-minus normal equations are singular (rank {rank} of {check.shape[1]}); "
                "increase ridge_strength or drop duplicated columns"
            )
    beta, info = cg(A, b, rtol=rtol, atol=0.0, maxiter=10 * A.shape[0] + 100)
    if info != 0:
        residual = float(np.linalg.norm(A @ beta - b))
        raise ConvergenceError(f"conjugate gradient stopped with info={info}", trace=[residual])
    return beta


def teammate_targets(design: PMDesign, ratings: np.ndarray, min_segments: int) -> np.ndarray:
    """Mean rating of each player's frequent teammates, weighted by shared segments."""
    shared = (design.home_pitch.T @ design.home_pitch + design.away_pitch.T @ design.away_pitch)
    shared = shared.tolil()
    shared.setdiag(0)
    shared = shared.tocsr()
    shared.data[shared.data < min_segments] = 0
    shared.eliminate_zeros()
    totals = np.asarray(shared.sum(axis=1)).ravel()
    weighted = shared @ ratings
    return np.divide(weighted, totals, out=np.zeros_like(weighted), where=totals > 0)


def fit_pm_ratings(
    segments: Sequence[SegmentRecord],
    players: Optional[Mapping[str, PlayerInfo]] = None,
    ridge_strength: Optional[float] = None,
    settings: Optional[PMSettings] = None,
) -> PMRatingModel:
    """Weighted ridge fit of player and covariate effects.

    The response of a segment is its home-minus-away goal difference scaled to 90 minutes
    (``goal_diff * 90 / duration``), not the raw segment goal difference. Duration enters
    through the segment weights when ``settings.duration_weight`` is on. Players are shrunk
    towards zero, or towards their teammates' mean when ``settings.teammate_prior`` is on.
    """
    settings = settings or PMSettings()
    if ridge_strength is not None:
        settings = settings.model_copy(update={"ridge_strength": ridge_strength})
    design = design_matrix(segments, settings, players)

    # empty covariate columns carry no information; fix them at zero
    nonzero = np.asarray(abs(design.X).sum(axis=0)).ravel() > 0
    keep = np.concatenate([np.ones(design.n_players, dtype=bool), nonzero[design.n_players:]])
    reduced = PMDesign(
        X=design.X[:, keep], y=design.y, w=design.w, players=design.players,
        covariates=tuple(c for c, k in zip(design.covariates, keep[design.n_players:]) if k),
        home_pitch=design.home_pitch, away_pitch=design.away_pitch,
    )

    targets = np.zeros(design.n_players)
    beta = _solve(reduced, settings.ridge_strength, targets, settings.cg_rtol)
    if settings.teammate_prior and settings.ridge_strength > 0:
        targets = teammate_targets(reduced, beta[: design.n_players], settings.teammate_min_segments)
        beta = _solve(reduced, settings.ridge_strength, targets, settings.cg_rtol)

    ratings = dict(zip(design.players, (float(v) for v in beta[: design.n_players])))
    covariates = dict(zip(reduced.covariates, (float(v) for v in beta[design.n_players:])))
    for name in design.covariates:
        covariates.setdefault(name, 0.0)
    if not all(np.isfinite(v) for v in ratings.values()):
        raise NumericalError("non-finite plus-minus ratings")

    logger.info(
        "fitted plus-minus ratings for %d players from %d segments", len(ratings), len(segments)
    )
    def pick(prefix: str) -> dict[str, float]:
        return {k.split(":", 1)[1]: v for k, v in covariates.items() if k.startswith(prefix)}

    return PMRatingModel(
        player_ratings=ratings,
        home_advantage=pick("home:"),
        competition_adjust=pick("league:"),
        red_card_effects=pick("red:"),
        age_coeffs=(covariates.get("age", 0.0), covariates.get("age_sq", 0.0)),
        ridge_strength=settings.ridge_strength,
        settings=settings,
    )


@dataclass(frozen=True)
class TeamPMSummary:
    team: str
    ave_pm: float


def team_ave_pm(model: PMRatingModel, squad: Iterable[str], team: str = "") -> TeamPMSummary:
    squad = list(squad)
    if not squad:
        raise DataError(f"squad of {team or 'team'} is empty")
    unrated = [p for p in squad if p not in model.player_ratings]
    if unrated:
        raise DataError(f"no plus-minus rating for {', '.join(unrated)}")
    return TeamPMSummary(team=team, ave_pm=float(np.mean([model.player_ratings[p] for p in squad])))
