"""Configuration management for pvalue_spc runs."""
import logging
from pathlib import Path
from typing import Union

from dotenv import load_dotenv
from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from pvalue_spc.sources.two_sample import EXACT_CUTOFF, TestMode

# Load .env from project root
project_root = Path(__file__).parent.parent.parent
env_path = project_root / ".env"
load_dotenv(env_path)


class Settings(BaseSettings):
    """Run defaults loaded from PVSPC_* environment variables."""

    model_config = SettingsConfigDict(env_prefix="PVSPC_")

    # Simulation
    seed: int = Field(default=2024, ge=0)
    reps: int = Field(default=100, ge=1)
    max_horizon: int = Field(default=10_000_000, ge=1)
    threads: int = Field(default=1, ge=1)

    # Two-sample tests
    ks_mode: TestMode = TestMode.AUTO
    exact_cutoff: int = Field(default=EXACT_CUTOFF, ge=1)

    # Output
    log_level: str = "INFO"
    full_precision: bool = False

    @field_validator("log_level")
    @classmethod
    def _check_log_level(cls, value: str) -> str:
        value = value.upper()
        if not isinstance(logging.getLevelName(value), int):
            raise ValueError(f"unknown log level {value!r}")
        return value

    @property
    def log_level_number(self) -> int:
        return logging.getLevelName(self.log_level)


def load_config_file(path: Union[str, Path]) -> dict[str, str]:
    """Read a ``key = value`` config file.

    Blank lines and ``#`` comments are skipped. Keys use the command-line flag
    spelling with or without the leading dashes; ``-`` and ``_`` are
    interchangeable. Returned keys use underscores.
    """
    path = Path(path)
    values: dict[str, str] = {}
    with path.open(encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            key, sep, value = text.partition("=")
            key = key.strip().lstrip("-").replace("-", "_")
            value = value.strip()
            if not sep or not key or not value:
                raise ValueError(f"{path}:{number}: expected 'key = value', got {line.strip()!r}")
            if key in values:
                raise ValueError(f"{path}:{number}: duplicate key {key!r}")
            values[key] = value
    return values
