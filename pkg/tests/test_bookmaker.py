from __future__ import annotations

import math

import numpy as np
import pytest

from eurocast.bookmaker import (
    _simulated_log_odds,
    ability_intensities,
    clean_odds,
    consensus_from_sheets,
    consensus_log_odds,
    estimate_overround,
    fit_consensus_abilities,
    median_overround,
    quote_odds,
    win_probability,
)
from eurocast.errors import ConvergenceError, DataError
from eurocast.models import OddsSheet


def _sheet(name: str, probs: dict[str, float], delta: float) -> OddsSheet:
    return OddsSheet(
        bookmaker=name,
        entries={t: quote_odds((1 - p) / p, delta) for t, p in probs.items()},
    )


def test_clean_odds_removes_the_margin():
    assert clean_odds(3.25, 0.85) == pytest.approx(2.6471, abs=1e-4)
    assert clean_odds(quote_odds(4.0, 0.9), 0.9) == pytest.approx(4.0)
    with pytest.raises(DataError):
        clean_odds(1.0, 0.85)
    with pytest.raises(DataError):
        clean_odds(3.0, 1.2)
    with pytest.raises(DataError, match=r"\(0, 1\)"):
        clean_odds(3.0, 1.0)


def test_overround_is_recovered_from_one_book():
    probs = {"A": 0.5, "B": 0.3, "C": 0.2}
    assert estimate_overround(_sheet("x", probs, 0.85)) == pytest.approx(0.85, abs=1e-10)


def test_book_without_margin_has_no_overround():
    assert estimate_overround(OddsSheet(bookmaker="fair", entries={"A": 2.5, "B": 2.5})) is None


def test_median_overround_skips_unusable_books(caplog):
    probs = {"A": 0.5, "B": 0.3, "C": 0.2}
    sheets = [
        _sheet("a", probs, 0.80),
        _sheet("b", probs, 0.85),
        _sheet("c", probs, 0.90),
        OddsSheet(bookmaker="partial", entries={"A": 1.5}),
    ]
    assert median_overround(sheets, teams=["A", "B", "C"]) == pytest.approx(0.85, abs=1e-10)
    assert "partial" in caplog.text
    with pytest.raises(DataError):
        median_overround([OddsSheet(bookmaker="fair", entries={"A": 2.5, "B": 2.5})])


def test_consensus_log_odds_average_on_the_log_scale():
    sheets = [
        OddsSheet(bookmaker="a", entries={"A": 3.0, "B": 5.0}),
        OddsSheet(bookmaker="b", entries={"A": 5.0, "B": 5.0}),
    ]
    log_odds = consensus_log_odds(sheets, delta=0.5)
    assert log_odds["A"] == pytest.approx(0.5 * (math.log(4.0) + math.log(8.0)))
    assert log_odds["B"] == pytest.approx(math.log(8.0))
    with pytest.raises(DataError, match="C"):
        consensus_log_odds(sheets, delta=0.5, teams=["A", "B", "C"])


def test_win_probability_inverts_log_odds():
    assert win_probability(0.0) == 0.5
    assert win_probability(math.log((1 - 0.2) / 0.2)) == pytest.approx(0.2)


def test_identical_probabilities_give_equal_abilities(euro2024):
    probs = {team: 1 / 24 for team in euro2024.teams}
    fitted = fit_consensus_abilities(
        probs, euro2024, sims_per_iter=100_000, rng_seed=2, verify_sims=None
    )
    assert fitted.iterations == 1
    assert all(abs(v) < 1e-12 for v in fitted.logability.values())
    assert fitted.loss_trace[0] < 0.05


def test_inverse_simulation_recovers_abilities(euro2024):
    teams = euro2024.teams
    strong = {euro2024.groups[g][0] for g in "ACEF"}
    truth = np.array([0.6 if t in strong else -0.12 for t in teams])
    forward = _simulated_log_odds(euro2024, truth, 0.15, 100_000, 99, 1, 10_000)
    probs = {t: 1.0 / (math.exp(l) + 1.0) for t, l in zip(teams, forward)}

    fitted = fit_consensus_abilities(probs, euro2024, sims_per_iter=10_000, verify_sims=None)
    assert fitted.loss_trace[-1] < 0.05
    assert abs(sum(fitted.logability.values())) < 1e-9
    weakest_strong = min(fitted.logability[t] for t in strong)
    strongest_weak = max(v for t, v in fitted.logability.items() if t not in strong)
    assert weakest_strong > strongest_weak
    assert [t for t, _ in fitted.ranking()[:4]] == sorted(
        strong, key=lambda t: -fitted.logability[t]
    )


def test_inverse_simulation_reports_non_convergence(euro2024):
    probs = {team: (0.3 if k == 0 else 0.7 / 23) for k, team in enumerate(euro2024.teams)}
    with pytest.raises(ConvergenceError) as info:
        fit_consensus_abilities(
            probs, euro2024, sims_per_iter=500, max_iter=2, tolerance=1e-9, verify_sims=None
        )
    assert len(info.value.trace) == 2


def test_probabilities_are_validated(euro2024):
    probs = {team: 1 / 24 for team in euro2024.teams[:-1]}
    with pytest.raises(DataError, match="no winning probability"):
        fit_consensus_abilities(probs, euro2024)
    probs = {team: 0.0 for team in euro2024.teams}
    with pytest.raises(DataError):
        fit_consensus_abilities(probs, euro2024)


def test_ability_intensities():
    lam = ability_intensities(np.array([0.2, -0.2]), 0.15)
    assert lam[0, 1] == pytest.approx(math.exp(0.55))
    assert lam[1, 0] == pytest.approx(math.exp(-0.25))


def test_sheets_are_chained_into_abilities(euro2024):
    probs = {team: 1 / 24 for team in euro2024.teams}
    sheets = [_sheet("a", probs, 0.8), _sheet("b", probs, 0.9)]
    fitted = consensus_from_sheets(
        sheets, euro2024, sims_per_iter=200, tolerance=10.0, verify_sims=None
    )
    assert fitted.overround == pytest.approx(0.85, abs=1e-9)
    assert fitted.win_prob["Germany"] == pytest.approx(1 / 24, abs=1e-3)
    assert fitted.iterations == 1
