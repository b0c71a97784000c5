"""Team-ability subcommands: ``rank-hist``, ``rank-bookmaker`` and ``rank-pm``."""

from __future__ import annotations

import argparse
import datetime as dt
from pathlib import Path

import pandas as pd

from .. import bookmaker, data, plus_minus
from ..errors import UsageError
from ..hist_ability import HistAbilityOptions, fit_hist_abilities
from ..settings import get_settings
from . import CommandResult, threads, write_csv


def _date(raw: str) -> dt.date:
    try:
        return dt.date.fromisoformat(raw)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {raw!r}") from exc


def rank_hist(args: argparse.Namespace) -> CommandResult:
    settings = get_settings()
    matches = data.load_matches(args.matches)
    if not matches:
        raise UsageError(f"{args.matches} holds no matches")
    reference = args.reference_date or max(m.date for m in matches)
    options = HistAbilityOptions(
        half_period_days=args.half_period_days or settings.half_period_days,
        home_effect=args.home_effect,
        sparse_ridge=args.sparse_ridge,
    )
    model = fit_hist_abilities(
        matches, reference, window_years=args.window_years or settings.window_years, options=options
    )
    frame = pd.DataFrame(model.ranking(), columns=["team", "hist_ability"])
    out = write_csv(frame, Path(args.output))
    leader = model.ranking()[0]
    return CommandResult(
        summary=f"rank-hist teams={len(frame)} matches={model.n_matches} "
        f"top={leader[0]} intercept={model.intercept:.4f} output={out}",
        outputs=[out],
        inputs=[Path(args.matches)],
        tuning={
            "reference_date": reference.isoformat(),
            "intercept": model.intercept,
            "home_effects": model.home_effects,
            **options.model_dump(),
        },
    )


def rank_bookmaker(args: argparse.Namespace) -> CommandResult:
    settings = get_settings()
    config = data.load_tournament(args.tournament)
    sheets = data.load_odds(args.odds, data.tournament_registry(args.tournament))
    fitted = bookmaker.consensus_from_sheets(
        sheets,
        config,
        sims_per_iter=args.sims_per_iter or settings.consensus_sims_per_iter,
        rng_seed=args.seed,
        offset=settings.bookmaker_offset if args.offset is None else args.offset,
        max_iter=args.max_iter or settings.consensus_max_iter,
        tolerance=args.tolerance or settings.consensus_tolerance,
        verify_sims=None if args.no_verify else settings.consensus_verify_sims,
        threads=threads(args, settings),
        chunk_size=settings.mc_chunk_size,
    )
    frame = pd.DataFrame(
        [
            (team, fitted.log_odds[team], fitted.win_prob[team], ability)
            for team, ability in fitted.ranking()
        ],
        columns=["team", "log_odds", "win_prob", "logability"],
    )
    out = write_csv(frame, Path(args.output))
    return CommandResult(
        summary=f"rank-bookmaker teams={len(frame)} bookmakers={len(sheets)} "
        f"delta={fitted.overround:.4f} iterations={fitted.iterations} "
        f"rmse={fitted.loss_trace[-1]:.4f} output={out}",
        outputs=[out],
        inputs=[Path(args.odds)] + ([Path(args.tournament)] if Path(args.tournament).is_file() else []),
        tuning={
            "tournament": str(args.tournament),
            "overround": fitted.overround,
            "offset": fitted.offset,
            "iterations": fitted.iterations,
            "verified_rmse": fitted.verified_rmse,
        },
    )


def rank_pm(args: argparse.Namespace) -> CommandResult:
    events = plus_minus.load_events(args.events)
    lineups = plus_minus.load_lineups(args.lineups)
    matches = plus_minus.load_pm_matches(args.matches)
    players = plus_minus.load_players(args.players) if args.players else None
    squads = plus_minus.load_squads(args.squads)
    pm_settings = plus_minus.PMSettings(
        ridge_strength=args.ridge,
        home_advantage=not args.no_home,
        red_cards=not args.no_red_cards,
        league_adjust=players is not None and not args.no_league,
        age_adjust=players is not None and not args.no_age,
        teammate_prior=not args.no_teammate_prior,
        reference_date=args.reference_date,
    )
    segments = plus_minus.build_segments(events, lineups, matches)
    model = plus_minus.fit_pm_ratings(segments, players, settings=pm_settings)
    rows = [
        plus_minus.team_ave_pm(model, squad, team) for team, squad in sorted(squads.items())
    ]
    frame = pd.DataFrame(
        [(r.team, r.ave_pm) for r in rows], columns=["team", "ave_pm"]
    ).sort_values(["ave_pm", "team"], ascending=[False, True], kind="mergesort")
    out = write_csv(frame, Path(args.output))
    inputs = [Path(p) for p in (args.events, args.lineups, args.matches, args.squads, args.players) if p]
    return CommandResult(
        summary=f"rank-pm teams={len(frame)} players={len(model.player_ratings)} "
        f"segments={len(segments)} output={out}",
        outputs=[out],
        inputs=inputs,
        tuning=pm_settings.model_dump(mode="json"),
    )


def register(subparsers, parents: list[argparse.ArgumentParser]) -> None:
    p = subparsers.add_parser("rank-hist", parents=parents, help="historic abilities from past matches")
    p.add_argument("--matches", required=True, help="matches CSV")
    p.add_argument(
        "--as-of", "--reference-date", dest="reference_date", type=_date,
        help="reference date; defaults to the latest match date",
    )
    p.add_argument("--window-years", type=float)
    p.add_argument("--half-period-days", type=float)
    p.add_argument("--home-effect", choices=["shared", "team"], default="shared")
    p.add_argument("--sparse-ridge", type=float, default=0.0)
    p.add_argument("--output", default="hist_abilities.csv")
    p.set_defaults(handler=rank_hist)

    p = subparsers.add_parser(
        "rank-bookmaker", parents=parents, help="abilities by inverse tournament simulation"
    )
    p.add_argument("--odds", required=True, help="bookmaker winner-odds CSV")
    p.add_argument("--tournament", default="euro2024", help="tournament TOML or bundled name")
    p.add_argument("--sims-per-iter", type=int)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--offset", type=float)
    p.add_argument("--no-verify", action="store_true", help="skip the final verification pass")
    p.add_argument("--output", required=True)
    p.set_defaults(handler=rank_bookmaker)

    p = subparsers.add_parser("rank-pm", parents=parents, help="squad plus-minus ratings")
    p.add_argument("--events", required=True)
    p.add_argument("--lineups", required=True)
    p.add_argument("--matches", required=True, help="club match metadata CSV")
    p.add_argument("--squads", required=True)
    p.add_argument("--players", help="roster metadata CSV (birth date, league)")
    p.add_argument("--ridge", type=float, default=1.0)
    p.add_argument("--reference-date", type=_date)
    p.add_argument("--no-home", action="store_true")
    p.add_argument("--no-red-cards", action="store_true")
    p.add_argument("--no-league", action="store_true")
    p.add_argument("--no-age", action="store_true")
    p.add_argument("--no-teammate-prior", action="store_true")
    p.add_argument("--output", required=True)
    p.set_defaults(handler=rank_pm)
