"""Tournament forecast subcommand: ``simulate``."""

from __future__ import annotations

import argparse
from pathlib import Path

from .. import data
from ..errors import DataError
from ..persistence import load_model
from ..settings import get_settings
from ..simulator import run_tournament_mc
from . import CommandResult, threads, write_csv


def simulate(args: argparse.Namespace) -> CommandResult:
    settings = get_settings()
    config = data.load_tournament(args.tournament)
    model = load_model(args.model)
    year = args.year or config.year
    features = {
        f.team: f for f in data.load_features(args.features) if f.tournament_year == year
    }
    if not features:
        raise DataError(f"{args.features} has no feature vectors for {year}")
    replications = args.replications or settings.replications
    report = run_tournament_mc(
        config,
        model,
        features,
        replications=replications,
        seed=args.seed,
        threads=threads(args, settings),
        chunk_size=settings.mc_chunk_size,
    )
    frame = report.to_frame(percent=args.percent)
    out = write_csv(frame, Path(args.output), float_format="%.1f" if args.percent else "%.4f")
    favourite = frame.iloc[0]
    inputs = [Path(args.features)] + ([Path(args.tournament)] if Path(args.tournament).is_file() else [])
    return CommandResult(
        summary=f"simulate replications={replications} favourite={favourite['team']} "
        f"p_champion={favourite['p_champion']:.4f} output={out}",
        outputs=[out],
        inputs=inputs,
        tuning={"tournament": str(args.tournament), "year": year, "replications": replications},
        model_files=[Path(args.model)],
    )


def register(subparsers, parents: list[argparse.ArgumentParser]) -> None:
    p = subparsers.add_parser("simulate", parents=parents, help="Monte Carlo stage probabilities")
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--features", required=True, help="team features CSV")
    p.add_argument("--year", type=int, help="edition of the features; defaults to the tournament's")
    p.add_argument("--tournament", default="euro2024", help="tournament TOML or bundled name")
    p.add_argument("--reps", "--replications", dest="replications", type=int)
    p.add_argument("--percent", action="store_true", help="write percentages with one decimal")
    p.add_argument("--output", default="forecast.csv")
    p.set_defaults(handler=simulate)
