from __future__ import annotations

import os
from contextlib import contextmanager
from functools import lru_cache
from typing import Iterator, Optional

from sqlalchemy import inspect
from sqlalchemy.engine import Engine
from sqlmodel import Session, SQLModel, create_engine, select

from .models import PipelineManifest, PipelineRun
from .settings import get_settings


@lru_cache
def get_engine(url: Optional[str] = None) -> Engine:
    db_url = url or get_settings().ledger_url
    connect_args = {"check_same_thread": False} if db_url.startswith("sqlite") else {}
    return create_engine(db_url, echo=False, connect_args=connect_args)


def _get_sqlite_path(engine: Engine) -> Optional[str]:
    if engine.url.get_backend_name() != "sqlite":
        return None

    database = engine.url.database
    if not database or database == ":memory:":
        return None

    expanded = os.path.expanduser(database)
    return os.path.abspath(expanded)


def get_or_create_db(engine: Optional[Engine] = None) -> bool:
    engine = engine or get_engine()

    sqlite_path = _get_sqlite_path(engine)
    if sqlite_path:
        directory = os.path.dirname(sqlite_path)
        if directory and not os.path.exists(directory):
            os.makedirs(directory, exist_ok=True)

    has_tables = "pipelinerun" in inspect(engine).get_table_names()
    SQLModel.metadata.create_all(engine)
    return not has_tables


@contextmanager
def get_session(engine: Optional[Engine] = None) -> Iterator[Session]:
    with Session(engine or get_engine()) as session:
        yield session


def record_run(manifest: PipelineManifest, primary_output: Optional[str] = None) -> int:
    get_or_create_db()
    run = PipelineRun(
        command=manifest.command,
        seed=manifest.seed,
        primary_output_hash=manifest.outputs.get(primary_output) if primary_output else None,
        manifest=manifest.model_dump(mode="json"),
    )
    with get_session() as session:
        session.add(run)
        session.commit()
        session.refresh(run)
        return int(run.id)


def recent_runs(limit: int = 20) -> list[PipelineRun]:
    get_or_create_db()
    with get_session() as session:
        statement = select(PipelineRun).order_by(PipelineRun.id.desc()).limit(limit)
        return list(session.exec(statement).all())
