"""Subcommand groups. Each module exposes ``register(subparsers)``."""

from __future__ import annotations

import argparse
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import pandas as pd

from ..ensemble import WEIGHT_TOLERANCE
from ..errors import UsageError
from ..persistence import file_sha256
from ..settings import Settings, get_settings


@dataclass
class CommandResult:
    """What a handler produced; ``main`` turns it into the manifest and summary line."""

    summary: str
    outputs: list[Path] = field(default_factory=list)
    inputs: list[Path] = field(default_factory=list)
    tuning: dict[str, Any] = field(default_factory=dict)
    weights: Optional[list[float]] = None
    model_files: list[Path] = field(default_factory=list)

    @property
    def primary_output(self) -> Optional[Path]:
        return self.outputs[0] if self.outputs else None


def hashes(paths: Sequence[Path]) -> dict[str, str]:
    return {str(p): file_sha256(p) for p in paths if p.is_file()}


def write_csv(frame: pd.DataFrame, path: Path, float_format: Optional[str] = None) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=float_format, lineterminator="\n")
    return path


def threads(args: argparse.Namespace, settings: Optional[Settings] = None) -> int:
    return args.threads or (settings or get_settings()).threads


def parse_weights(raw: str) -> tuple[float, float, float]:
    try:
        values = tuple(float(v) for v in raw.split(","))
    except ValueError as exc:
        raise UsageError(f"--weights expects three comma-separated numbers, got {raw!r}") from exc
    if len(values) != 3:
        raise UsageError(f"--weights expects three comma-separated numbers, got {raw!r}")
    if any(v < 0 for v in values) or abs(sum(values) - 1.0) > WEIGHT_TOLERANCE:
        raise UsageError(f"--weights must be non-negative and sum to 1, got {raw!r}")
    return values  # type: ignore[return-value]
