"""Dataset and model-fitting subcommands: ``build-dataset`` and ``fit``."""

from __future__ import annotations

import argparse
from pathlib import Path

from .. import data
from ..ensemble import MEMBERS, ModelSpec, fit_members
from ..errors import DataError, UsageError
from ..persistence import save_model
from ..settings import get_settings
from . import CommandResult, parse_weights, threads


def build_dataset(args: argparse.Namespace) -> CommandResult:
    matches = data.load_matches(args.matches)
    features = data.load_features(args.features)
    rows = data.build_diff_rows(matches, features)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.write_diff_rows(out, rows)
    return CommandResult(
        summary=f"build-dataset matches={len(matches)} rows={len(rows)} output={out}",
        outputs=[out],
        inputs=[Path(args.matches), Path(args.features)],
    )


def model_spec(args: argparse.Namespace, members: tuple[str, ...]) -> ModelSpec:
    settings = get_settings()
    return ModelSpec(
        members=members,
        folds=args.folds or settings.cv_folds,
        seed=args.seed,
        lasso_rule=args.lasso_rule,
        forest_trees=args.trees or settings.forest_trees,
        forest_tuning_trees=args.tuning_trees or settings.forest_tuning_trees,
        forest_min_leaf=settings.forest_min_leaf,
        threads=threads(args, settings),
    )


def fit(args: argparse.Namespace) -> CommandResult:
    rows = data.load_diff_rows(args.data)
    if not rows:
        raise DataError(f"{args.data} holds no rows")
    if args.model == "combined":
        if args.weights is None:
            raise UsageError("--model combined needs --weights w_lasso,w_forest,w_xgb")
        weights = parse_weights(args.weights)
        members = tuple(m for m, w in zip(MEMBERS, weights) if w > 0)
    else:
        if args.weights is not None:
            raise UsageError("--weights only applies to --model combined")
        weights = None
        members = (args.model,)

    spec = model_spec(args, members)
    fitted = fit_members(rows, spec)
    model = fitted.combined(weights) if weights is not None else fitted.models[args.model]
    tuning = {"spec": spec.model_dump(mode="json"), **fitted.tuning}
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out, tuning=tuning)
    return CommandResult(
        summary=f"fit model={args.model} rows={len(rows)} members={','.join(members)} output={out}",
        outputs=[out],
        inputs=[Path(args.data)],
        tuning=tuning,
        weights=list(weights) if weights is not None else None,
        model_files=[out],
    )


def add_tuning_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("--folds", type=int, help="inner k-fold count for tuning")
    p.add_argument("--trees", type=int, help="forest size")
    p.add_argument("--tuning-trees", type=int, help="forest size while tuning mtry")
    p.add_argument("--lasso-rule", choices=["min", "1se"], default="min")


def register(subparsers, parents: list[argparse.ArgumentParser]) -> None:
    p = subparsers.add_parser(
        "build-dataset", parents=parents, help="join matches and features into difference rows"
    )
    p.add_argument("--matches", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(handler=build_dataset)

    p = subparsers.add_parser("fit", parents=parents, help="tune and fit a goal model")
    p.add_argument("--data", required=True, help="feature-difference CSV")
    p.add_argument("--model", choices=[*MEMBERS, "combined"], required=True)
    p.add_argument("--weights", help="w_lasso,w_forest,w_xgb for --model combined")
    add_tuning_arguments(p)
    p.add_argument("--output", required=True, help="model JSON")
    p.set_defaults(handler=fit)
