"""``runs``: list recent entries of the run ledger."""

from __future__ import annotations

import argparse

from ..database import recent_runs
from . import CommandResult


def runs(args: argparse.Namespace) -> CommandResult:
    entries = recent_runs(args.limit)
    for run in entries:
        print(
            f"{run.id}\t{run.created_at.isoformat(timespec='seconds')}\t{run.command}\t"
            f"{'' if run.seed is None else run.seed}\t{run.primary_output_hash or ''}"
        )
    return CommandResult(summary=f"runs listed={len(entries)}")


def register(subparsers, parents: list[argparse.ArgumentParser]) -> None:
    p = subparsers.add_parser("runs", parents=parents, help="recent pipeline runs")
    p.add_argument("--limit", type=int, default=20)
    p.set_defaults(handler=runs, record=False)
