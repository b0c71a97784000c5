"""Team abilities from weighted historic international results.

Goals of team i against team j in match m are independent Poisson with
``log λ = β₀ + r_i − r_j + h·1(i at home)``; each match enters the likelihood raised to
the power ``w_time · w_type``. Abilities are identified by ``Σ r_i = 0``, enforced by
optimising in an orthonormal basis of the sum-zero subspace and centering the result.
"""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field
from typing import Literal, Mapping, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import sparse
from scipy.linalg import null_space
from scipy.optimize import minimize
from scipy.sparse.csgraph import connected_components

from .errors import ConvergenceError, DataError
from .models import MatchRecord, MatchType

logger = logging.getLogger(__name__)

DAYS_PER_YEAR = 365.25
DEFAULT_HALF_PERIOD_DAYS = 3 * DAYS_PER_YEAR

TYPE_WEIGHTS: Mapping[MatchType, float] = {
    MatchType.world_cup: 4.0,
    MatchType.confederation_tournament: 3.0,
    MatchType.qualifier: 2.5,
    MatchType.friendly_other: 1.0,
}


def time_weight(days_ago: float, half_period_days: float = DEFAULT_HALF_PERIOD_DAYS) -> float:
    if days_ago < 0:
        raise DataError(f"days_ago must be non-negative, got {days_ago}")
    if half_period_days <= 0:
        raise DataError(f"half_period_days must be positive, got {half_period_days}")
    return 0.5 ** (days_ago / half_period_days)


def type_weight(match_type: MatchType) -> float:
    return TYPE_WEIGHTS[MatchType(match_type)]


@dataclass(frozen=True)
class MatchWeight:
    w_time: float
    w_type: float

    @property
    def w(self) -> float:
        return self.w_time * self.w_type


def match_weight(
    match: MatchRecord, reference_date: dt.date, half_period_days: float = DEFAULT_HALF_PERIOD_DAYS
) -> MatchWeight:
    days_ago = (reference_date - match.date).days
    return MatchWeight(time_weight(days_ago, half_period_days), type_weight(match.match_type))


class HistAbilityOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    half_period_days: float = Field(default=DEFAULT_HALF_PERIOD_DAYS, gt=0)
    home_effect: Literal["shared", "team"] = "shared"
    # ridge on r_i for teams whose summed match weight is below sparse_min_weight
    sparse_ridge: float = Field(default=0.0, ge=0)
    sparse_min_weight: float = Field(default=5.0, ge=0)
    max_iter: int = Field(default=200, ge=1)
    gradient_tolerance: float = Field(default=1e-6, gt=0)


@dataclass(frozen=True)
class HistAbilityModel:
    intercept: float
    abilities: dict[str, float]
    home_effects: dict[str, float]
    half_period_days: float
    reference_date: dt.date
    home_effect: str = "shared"
    n_matches: int = 0
    gradient_norm: float = 0.0
    objective_trace: tuple[float, ...] = field(default=(), repr=False)

    def ranking(self) -> list[tuple[str, float]]:
        return sorted(self.abilities.items(), key=lambda kv: (-kv[1], kv[0]))


def predict_match(
    model: HistAbilityModel, team: str, opponent: str, team_at_home: bool = False
) -> tuple[float, float]:
    """Expected goals (team, opponent) straight from the fitted log-linear model."""
    for name in (team, opponent):
        if name not in model.abilities:
            raise DataError(f"team {name!r} has no historic ability")
    diff = model.abilities[team] - model.abilities[opponent]
    home = model.home_effects.get(team, 0.0) if team_at_home else 0.0
    return (
        float(np.exp(model.intercept + diff + home)),
        float(np.exp(model.intercept - diff)),
    )


def _window(
    matches: Sequence[MatchRecord], reference_date: dt.date, window_years: float
) -> list[MatchRecord]:
    start = reference_date - dt.timedelta(days=window_years * DAYS_PER_YEAR)
    return [m for m in matches if start <= m.date <= reference_date]


def fit_hist_abilities(
    matches: Sequence[MatchRecord],
    reference_date: dt.date,
    window_years: float = 8.0,
    options: Optional[HistAbilityOptions] = None,
) -> HistAbilityModel:
    options = options or HistAbilityOptions()
    window = _window(matches, reference_date, window_years)
    if not window:
        raise DataError(
            f"no matches in the {window_years}-year window before {reference_date.isoformat()}"
        )

    teams = sorted({m.home_team for m in window} | {m.away_team for m in window})
    index = {t: i for i, t in enumerate(teams)}
    n_teams, n_matches = len(teams), len(window)

    home_idx = np.array([index[m.home_team] for m in window])
    away_idx = np.array([index[m.away_team] for m in window])
    weights = np.array([match_weight(m, reference_date, options.half_period_days).w for m in window])
    at_home = np.array([not m.neutral for m in window])

    graph = sparse.coo_matrix((np.ones(n_matches), (home_idx, away_idx)), shape=(n_teams, n_teams))
    n_components, _ = connected_components(graph, directed=False)
    if n_components > 1 and options.sparse_ridge == 0:
        raise DataError(
            f"match graph splits into {n_components} components; abilities are not identified"
        )

    # two observations per match: home perspective, then away perspective
    team_of = np.concatenate([home_idx, away_idx])
    opp_of = np.concatenate([away_idx, home_idx])
    goals = np.concatenate([[m.goals_home for m in window], [m.goals_away for m in window]]).astype(float)
    w = np.concatenate([weights, weights])
    home_flag = np.concatenate([at_home, np.zeros(n_matches, dtype=bool)])

    rows = np.arange(2 * n_matches)
    contrast = sparse.csr_matrix(
        (np.concatenate([np.ones(2 * n_matches), -np.ones(2 * n_matches)]),
         (np.concatenate([rows, rows]), np.concatenate([team_of, opp_of]))),
        shape=(2 * n_matches, n_teams),
    )
    basis = null_space(np.ones((1, n_teams)))  # n x (n-1), orthonormal, sum-zero columns
    ability_block = np.asarray(contrast @ basis)

    if options.home_effect == "shared":
        home_teams = ["*"] if home_flag.any() else []
        home_block = home_flag[:, None].astype(float) if home_teams else np.zeros((2 * n_matches, 0))
    else:
        home_teams = sorted({teams[i] for i in team_of[home_flag]})
        home_block = np.zeros((2 * n_matches, len(home_teams)))
        for col, name in enumerate(home_teams):
            home_block[:, col] = home_flag & (team_of == index[name])

    design = np.hstack([np.ones((2 * n_matches, 1)), ability_block, home_block])
    total_weight = float(w.sum())

    team_weight = np.bincount(home_idx, weights, n_teams) + np.bincount(away_idx, weights, n_teams)
    sparse_mask = (team_weight < options.sparse_min_weight).astype(float) * options.sparse_ridge
    ridge = basis.T @ (sparse_mask[:, None] * basis) / total_weight
    n_ab = n_teams - 1

    trace: list[float] = []

    def objective(theta: np.ndarray) -> tuple[float, np.ndarray]:
        eta = design @ theta
        mu = np.exp(eta)
        phi = theta[1:1 + n_ab]
        value = -float(w @ (goals * eta - mu)) / total_weight + 0.5 * float(phi @ ridge @ phi)
        grad = -(design.T @ (w * (goals - mu))) / total_weight
        grad[1:1 + n_ab] += ridge @ phi
        trace.append(value)
        return value, grad

    def hessian(theta: np.ndarray) -> np.ndarray:
        mu = np.exp(design @ theta)
        hess = design.T @ ((w * mu)[:, None] * design) / total_weight
        hess[1:1 + n_ab, 1:1 + n_ab] += ridge
        return hess

    mean_goals = float(w @ goals) / (2 * total_weight)
    if mean_goals <= 0:
        raise DataError("no goals scored inside the window; intercept is not identified")
    theta0 = np.zeros(design.shape[1])
    theta0[0] = np.log(mean_goals)

    result = minimize(
        objective, theta0, jac=True, hess=hessian, method="trust-exact",
        options={"gtol": options.gradient_tolerance * 1e-2, "maxiter": options.max_iter},
    )
    _, grad = objective(result.x)
    grad_norm = float(np.linalg.norm(grad))
    if grad_norm >= options.gradient_tolerance:
        raise ConvergenceError(
            f"historic ability fit did not converge after {result.nit} iterations "
            f"(gradient norm {grad_norm:.3e})",
            trace=trace,
        )

    theta = result.x
    r = basis @ theta[1:1 + n_ab]
    r = r - r.mean()
    if options.home_effect == "shared":
        shared = float(theta[-1]) if home_teams else 0.0
        home_effects = {t: shared for t in teams}
    else:
        fitted = dict(zip(home_teams, theta[1 + n_ab:]))
        home_effects = {t: float(fitted.get(t, 0.0)) for t in teams}

    logger.info(
        "fitted historic abilities for %d teams from %d matches (gradient norm %.2e)",
        n_teams, n_matches, grad_norm,
    )
    return HistAbilityModel(
        intercept=float(theta[0]),
        abilities={t: float(v) for t, v in zip(teams, r)},
        home_effects=home_effects,
        half_period_days=options.half_period_days,
        reference_date=reference_date,
        home_effect=options.home_effect,
        n_matches=n_matches,
        gradient_norm=grad_norm,
        objective_trace=tuple(trace),
    )
