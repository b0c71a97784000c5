from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .commands import CommandResult, hashes
from .commands import evaluation as evaluation_commands
from .commands import ledger as ledger_commands
from .commands import modeling as modeling_commands
from .commands import ratings as ratings_commands
from .commands import simulation as simulation_commands
from .database import record_run
from .errors import EurocastError, UsageError
from .models import PipelineManifest
from .settings import get_settings

logger = logging.getLogger("eurocast")


class ArgumentParser(argparse.ArgumentParser):
    """Parse failures become :class:`UsageError` so they share the exit-code mapping."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, help="worker processes (default from settings)")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    common.add_argument("--no-ledger", action="store_true", help="do not record this run")
    return common


def create_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="eurocast", description="EURO tournament forecasting pipeline")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)
    parents = [_common_options()]
    for module in (
        ratings_commands,
        modeling_commands,
        evaluation_commands,
        simulation_commands,
        ledger_commands,
    ):
        module.register(subparsers, parents)
    return parser


def _configure_logging(level: Optional[str]) -> None:
    name = (level or get_settings().log_level).upper()
    if sys.version_info >= (3, 11):
        level_names = logging.getLevelNamesMapping()
    else:  # pragma: no cover - Python 3.10 fallback
        level_names = dict(logging._nameToLevel)
    if name not in level_names:
        raise UsageError(f"unknown log level {level!r}")
    logging.basicConfig(
        level=name,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _manifest(args: argparse.Namespace, argv: Sequence[str], result: CommandResult) -> PipelineManifest:
    return PipelineManifest(
        command=args.command,
        argv=list(argv),
        inputs=hashes(result.inputs),
        seed=args.seed,
        threads=args.threads or get_settings().threads,
        tuning=result.tuning,
        weights=result.weights,
        model_hashes=hashes(result.model_files),
        outputs=hashes(result.outputs),
        tool_version=__version__,
    )


def run(argv: Sequence[str]) -> int:
    parser = create_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.log_level)
    if args.threads is not None and args.threads < 1:
        raise UsageError("--threads must be at least 1")

    result: CommandResult = args.handler(args)

    if getattr(args, "record", True):
        manifest = _manifest(args, argv, result)
        primary = result.primary_output
        if primary is not None:
            manifest_path = primary.with_name(primary.name + ".manifest.json")
            manifest_path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
        if get_settings().ledger_enabled and not args.no_ledger:
            run_id = record_run(manifest, str(primary) if primary else None)
            logger.debug("recorded run %d", run_id)
    print(result.summary)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return run(argv)
    except EurocastError as exc:
        logger.debug("command failed", exc_info=True)
        print(f"eurocast: error: {exc.detail}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
