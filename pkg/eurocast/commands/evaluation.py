"""Evaluation subcommands: ``evaluate``, ``tune-weights`` and ``importance``."""

from __future__ import annotations

import argparse
from pathlib import Path

import pandas as pd

from .. import data
from ..ensemble import (
    MEMBERS,
    PREDICTION_COLUMNS,
    group_by_tournament,
    loto_cv,
    permutation_importance,
    tune_weights,
    weight_grid_frame,
)
from ..errors import DataError
from ..persistence import load_model
from . import CommandResult, threads, write_csv
from .modeling import add_tuning_arguments, model_spec


def evaluate(args: argparse.Namespace) -> CommandResult:
    rows = data.load_diff_rows(args.data)
    odds = data.load_three_way_odds(args.three_way_odds) if args.three_way_odds else None
    spec = model_spec(args, tuple(args.members))
    result = loto_cv(group_by_tournament(rows), spec, three_way_odds=odds)

    out = write_csv(result.predictions, Path(args.output))
    metrics_path = Path(args.metrics) if args.metrics else out.with_suffix(".metrics.csv")
    metrics = pd.DataFrame(
        [{"model": name, **report.model_dump()} for name, report in result.reports.items()]
    )
    write_csv(metrics, metrics_path)
    best = min(result.reports.items(), key=lambda kv: kv[1].rps)
    inputs = [Path(args.data)] + ([Path(args.three_way_odds)] if args.three_way_odds else [])
    return CommandResult(
        summary=f"evaluate cv=loto tournaments={len(result.tuning)} "
        f"matches={len(result.predictions)} best_rps={best[0]}:{best[1].rps:.4f} output={out}",
        outputs=[out, metrics_path],
        inputs=inputs,
        tuning={
            "spec": spec.model_dump(mode="json"),
            "folds": {str(year): tuning for year, tuning in result.tuning.items()},
        },
    )


def tune_weights_command(args: argparse.Namespace) -> CommandResult:
    path = Path(args.predictions)
    if not path.is_file():
        raise DataError(f"{path}: file not found")
    predictions = pd.read_csv(path)
    required = PREDICTION_COLUMNS + [f"{m}_{k}" for m in MEMBERS for k in (1, 2)]
    missing = [c for c in required if c not in predictions.columns]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    entries = tune_weights(predictions, step=args.step, threads=threads(args))
    out = write_csv(weight_grid_frame(entries), Path(args.output))
    best = entries[0]
    return CommandResult(
        summary=f"tune-weights points={len(entries)} best={best.weights[0]:g},"
        f"{best.weights[1]:g},{best.weights[2]:g} avg_norm={best.avg_norm:.2f} output={out}",
        outputs=[out],
        inputs=[path],
        tuning={"step": args.step},
        weights=list(best.weights),
    )


def importance(args: argparse.Namespace) -> CommandResult:
    model = load_model(args.model)
    rows = data.load_diff_rows(args.data)
    scores = permutation_importance(
        model, rows, repeats=args.repeats, seed=args.seed, threads=threads(args)
    )
    frame = pd.DataFrame(list(scores.items()), columns=["feature", "importance"]).sort_values(
        ["importance", "feature"], ascending=[False, True], kind="mergesort"
    )
    out = write_csv(frame, Path(args.output))
    return CommandResult(
        summary=f"importance features={len(frame)} top={frame.iloc[0]['feature']} output={out}",
        outputs=[out],
        inputs=[Path(args.data)],
        tuning={"repeats": args.repeats},
        model_files=[Path(args.model)],
    )


def register(subparsers, parents: list[argparse.ArgumentParser]) -> None:
    p = subparsers.add_parser(
        "evaluate", parents=parents, help="leave-one-tournament-out evaluation of the members"
    )
    p.add_argument("--data", required=True, help="feature-difference CSV")
    p.add_argument("--cv", choices=["loto"], default="loto")
    p.add_argument("--members", nargs="+", choices=MEMBERS, default=list(MEMBERS))
    p.add_argument("--three-way-odds", help="pre-match 1X2 odds CSV for the bookmaker baseline")
    add_tuning_arguments(p)
    p.add_argument("--metrics", help="metrics CSV; defaults next to --output")
    p.add_argument("--output", required=True, help="held-out predictions CSV")
    p.set_defaults(handler=evaluate)

    p = subparsers.add_parser(
        "tune-weights", parents=parents, help="score the ensemble weight simplex grid"
    )
    p.add_argument("--predictions", required=True, help="predictions CSV from evaluate")
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--output", required=True)
    p.set_defaults(handler=tune_weights_command)

    p = subparsers.add_parser("importance", parents=parents, help="permutation variable importance")
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--data", required=True, help="feature-difference CSV")
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--output", required=True)
    p.set_defaults(handler=importance)

