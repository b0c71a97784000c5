"""Bundled tournament configs shipped under ``eurocast/seed``."""

from __future__ import annotations

import sys
if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - Python 3.10 fallback
    import tomli as tomllib
from importlib import resources
from typing import Any

from .errors import DataError


def bundled_names() -> list[str]:
    root = resources.files("eurocast") / "seed"
    return sorted(p.name.removesuffix(".toml") for p in root.iterdir() if p.name.endswith(".toml"))


def load_bundled_tournament(name: str) -> dict[str, Any]:
    resource = resources.files("eurocast") / "seed" / f"{name}.toml"
    if not resource.is_file():
        raise DataError(
            f"tournament config {name!r} is neither a file nor bundled ({', '.join(bundled_names())})"
        )
    with resource.open("rb") as fh:
        return tomllib.load(fh)
