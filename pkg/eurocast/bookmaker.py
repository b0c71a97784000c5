"""Team abilities from bookmakers' tournament-winner odds.

Quoted odds carry the bookmaker's margin as ``quoted = fair·δ + 1`` with one overround
δ per bookmaker. Cleaned odds are averaged on the log scale across bookmakers and
turned into consensus winning probabilities. Abilities are then found by simulating the
tournament repeatedly and nudging every team until the simulated winner log-odds match
the consensus.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from statistics import median
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .errors import ConvergenceError, DataError
from .models import OddsSheet, TournamentConfig
from .simulator import TournamentSimulator

logger = logging.getLogger(__name__)

DEFAULT_OFFSET = 0.15


def clean_odds(quoted: float, delta: float) -> float:
    """Fair (net) odds behind a quote."""
    if not quoted > 1.0:
        raise DataError(f"quoted odds must exceed 1, got {quoted}")
    if not 0.0 < delta < 1.0:
        raise DataError(f"overround delta must lie in (0, 1), got {delta}")
    return (quoted - 1.0) / delta


def quote_odds(fair: float, delta: float) -> float:
    return fair * delta + 1.0


def estimate_overround(sheet: OddsSheet) -> Optional[float]:
    """δ making the fair probabilities ``δ/(δ + q_i − 1)`` of one book sum to one.

    Returns None when the quotes carry no margin (``Σ 1/q_i <= 1``).
    """
    q = np.array(list(sheet.entries.values()), dtype=float)
    if np.sum(1.0 / q) <= 1.0:
        return None

    def excess(delta: float) -> float:
        return float(np.sum(delta / (delta + q - 1.0)) - 1.0)

    return float(brentq(excess, 1e-12, 1.0, xtol=1e-14))


def median_overround(sheets: Sequence[OddsSheet], teams: Optional[Sequence[str]] = None) -> float:
    deltas = []
    for sheet in sheets:
        if teams is not None and not set(teams) <= set(sheet.entries):
            logger.warning("bookmaker %s does not quote every team; skipped for δ", sheet.bookmaker)
            continue
        delta = estimate_overround(sheet)
        if delta is None:
            logger.warning("bookmaker %s quotes without a margin; skipped for δ", sheet.bookmaker)
            continue
        deltas.append(delta)
    if not deltas:
        raise DataError("no bookmaker allows the overround to be estimated")
    return float(median(deltas))


def consensus_log_odds(
    sheets: Sequence[OddsSheet],
    delta: Optional[float] = None,
    teams: Optional[Sequence[str]] = None,
) -> dict[str, float]:
    """Per-team mean of log cleaned odds over the bookmakers quoting that team."""
    if not sheets:
        raise DataError("no odds sheets given")
    if delta is None:
        delta = median_overround(sheets, teams)
    logs: dict[str, list[float]] = {}
    for sheet in sheets:
        for team, quoted in sheet.entries.items():
            logs.setdefault(team, []).append(math.log(clean_odds(quoted, delta)))
    if teams is not None:
        missing = [t for t in teams if t not in logs]
        if missing:
            raise DataError(f"no bookmaker quotes {', '.join(missing)}")
        logs = {t: logs[t] for t in teams}
    return {team: float(np.mean(values)) for team, values in logs.items()}


def win_probability(log_odds: float) -> float:
    return float(expit(-log_odds))


@dataclass(frozen=True)
class ConsensusAbilities:
    log_odds: dict[str, float]
    win_prob: dict[str, float]
    logability: dict[str, float]
    offset: float
    overround: Optional[float] = None
    iterations: int = 0
    verified_rmse: Optional[float] = None
    loss_trace: tuple[float, ...] = field(default=(), repr=False)

    def ranking(self) -> list[tuple[str, float]]:
        return sorted(self.logability.items(), key=lambda kv: (-kv[1], kv[0]))


def ability_intensities(abilities: np.ndarray, offset: float) -> np.ndarray:
    """``exp(β₀ + a_i − a_j)`` for every ordered pair, no home advantage."""
    return np.exp(offset + abilities[:, None] - abilities[None, :])


def _simulated_log_odds(
    config: TournamentConfig, abilities: np.ndarray, offset: float, sims: int, seed: int,
    threads: int, chunk_size: int,
) -> np.ndarray:
    simulator = TournamentSimulator(config, ability_intensities(abilities, offset))
    report = simulator.run(sims, seed, threads=threads, chunk_size=chunk_size)
    p = np.clip(report.probability("champion"), 0.5 / sims, 1.0 - 0.5 / sims)
    return np.log((1.0 - p) / p)


def fit_consensus_abilities(
    probs: Mapping[str, float],
    config: TournamentConfig,
    sims_per_iter: int = 10_000,
    rng_seed: int = 0,
    offset: float = DEFAULT_OFFSET,
    max_iter: int = 500,
    tolerance: float = 0.05,
    verify_sims: Optional[int] = 100_000,
    threads: int = 1,
    chunk_size: int = 10_000,
) -> ConsensusAbilities:
    """Inverse tournament simulation.

    Every iteration replays the tournament on the same random stream and moves each
    ability by ``0.01·iter^(−0.1)`` in the direction closing its log-odds gap; log-odds
    are odds against winning, so a team whose simulated log-odds are too long is too weak
    and gets stronger.
    """
    teams = config.teams
    missing = [t for t in teams if t not in probs]
    if missing:
        raise DataError(f"no winning probability for {', '.join(missing)}")
    p = np.array([probs[t] for t in teams], dtype=float)
    if np.any(p <= 0) or np.any(p >= 1):
        raise DataError("winning probabilities must lie strictly between 0 and 1")
    target = np.log((1.0 - p) / p)

    abilities = -target / 2.0
    abilities -= abilities.mean()
    trace: list[float] = []
    for iteration in range(1, max_iter + 1):
        simulated = _simulated_log_odds(
            config, abilities, offset, sims_per_iter, rng_seed, threads, chunk_size
        )
        gap = simulated - target
        loss = float(np.sqrt(np.mean(gap**2)))
        trace.append(loss)
        logger.debug("consensus iteration %d: rmse %.4f", iteration, loss)
        if loss < tolerance:
            break
        abilities = abilities + np.sign(gap) * 0.01 * iteration ** -0.1
    else:
        raise ConvergenceError(
            f"inverse simulation did not reach rmse {tolerance} in {max_iter} iterations "
            f"(last {trace[-1]:.4f})",
            trace=trace,
        )

    abilities = abilities - abilities.mean()
    verified = None
    if verify_sims:
        check = _simulated_log_odds(
            config, abilities, offset, verify_sims, rng_seed + 1, threads, chunk_size
        )
        verified = float(np.sqrt(np.mean((check - target) ** 2)))
        if verified >= tolerance:
            logger.warning("verification pass rmse %.4f exceeds %.2f", verified, tolerance)
    logger.info("consensus abilities converged after %d iterations (rmse %.4f)", len(trace), trace[-1])
    return ConsensusAbilities(
        log_odds={t: float(v) for t, v in zip(teams, target)},
        win_prob={t: float(probs[t]) for t in teams},
        logability={t: float(v) for t, v in zip(teams, abilities)},
        offset=offset,
        iterations=len(trace),
        verified_rmse=verified,
        loss_trace=tuple(trace),
    )


def consensus_from_sheets(
    sheets: Sequence[OddsSheet], config: TournamentConfig, **fit_options
) -> ConsensusAbilities:
    """Clean, average and invert a set of bookmaker sheets for one tournament."""
    delta = median_overround(sheets, config.teams)
    log_odds = consensus_log_odds(sheets, delta, config.teams)
    logger.info("median overround δ = %.4f over %d bookmakers", delta, len(sheets))
    probs = {team: win_probability(l) for team, l in log_odds.items()}
    fitted = fit_consensus_abilities(probs, config, **fit_options)
    return ConsensusAbilities(
        log_odds=log_odds,
        win_prob=probs,
        logability=fitted.logability,
        offset=fitted.offset,
        overround=delta,
        iterations=fitted.iterations,
        verified_rmse=fitted.verified_rmse,
        loss_trace=fitted.loss_trace,
    )
