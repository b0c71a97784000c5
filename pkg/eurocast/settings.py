from __future__ import annotations

from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="EUROCAST_", env_file=".env", extra="ignore")

    ledger_url: str = "sqlite:///./eurocast.db"
    ledger_enabled: bool = True
    log_level: str = "INFO"
    threads: int = Field(default=1, ge=1)

    # historic abilities
    half_period_days: float = Field(default=1095.75, gt=0)
    window_years: float = Field(default=8.0, gt=0)

    # bookmaker consensus
    bookmaker_offset: float = 0.15
    consensus_sims_per_iter: int = Field(default=10_000, ge=1)
    consensus_verify_sims: int = Field(default=100_000, ge=1)
    consensus_max_iter: int = Field(default=500, ge=1)
    consensus_tolerance: float = Field(default=0.05, gt=0)

    # predictors
    forest_trees: int = Field(default=5000, ge=1)
    forest_tuning_trees: int = Field(default=500, ge=1)
    forest_min_leaf: int = Field(default=5, ge=1)
    boost_learning_rate: float = Field(default=0.1, ge=0)
    cv_folds: int = Field(default=10, ge=2)

    # simulation
    replications: int = Field(default=100_000, ge=1)
    mc_chunk_size: int = Field(default=10_000, ge=1)
    intensity_floor: float = Field(default=1e-6, gt=0)
    goal_grid: int = Field(default=60, ge=10)


@lru_cache
def get_settings() -> Settings:
    return Settings()
