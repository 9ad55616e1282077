#!/usr/bin/env python3
"""Unit tests for pvalue_spc configuration."""
import logging
import sys
from pathlib import Path

import pytest

# Add pvalue_spc package to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from pvalue_spc.sources.two_sample import EXACT_CUTOFF, TestMode
from pvalue_spc.utils.config import Settings, load_config_file

ENV_NAMES = [
    "PVSPC_SEED",
    "PVSPC_REPS",
    "PVSPC_MAX_HORIZON",
    "PVSPC_THREADS",
    "PVSPC_KS_MODE",
    "PVSPC_EXACT_CUTOFF",
    "PVSPC_LOG_LEVEL",
    "PVSPC_FULL_PRECISION",
]


@pytest.fixture
def clean_env(monkeypatch):
    for name in ENV_NAMES:
        monkeypatch.delenv(name, raising=False)
    return monkeypatch


def test_settings_defaults(clean_env):
    """Test run defaults without any environment overrides."""
    settings = Settings()

    assert settings.seed == 2024
    assert settings.reps == 100
    assert settings.max_horizon == 10_000_000
    assert settings.threads == 1
    assert settings.ks_mode is TestMode.AUTO
    assert settings.exact_cutoff == EXACT_CUTOFF
    assert settings.log_level == "INFO"
    assert settings.full_precision is False


def test_settings_loads_env(clean_env):
    """Test that PVSPC_* variables override the defaults."""
    clean_env.setenv("PVSPC_REPS", "500")
    clean_env.setenv("PVSPC_KS_MODE", "exact")
    clean_env.setenv("PVSPC_FULL_PRECISION", "true")
    settings = Settings()

    assert settings.reps == 500
    assert settings.ks_mode is TestMode.EXACT
    assert settings.full_precision is True


def test_log_level_validation(clean_env):
    """Test that log levels are upper-cased and checked."""
    clean_env.setenv("PVSPC_LOG_LEVEL", "debug")
    settings = Settings()
    assert settings.log_level == "DEBUG"
    assert settings.log_level_number == logging.DEBUG

    clean_env.setenv("PVSPC_LOG_LEVEL", "chatty")
    with pytest.raises(ValueError):
        Settings()


def test_invalid_env_values_rejected(clean_env):
    """Test that out-of-range values fail validation."""
    clean_env.setenv("PVSPC_REPS", "0")
    with pytest.raises(ValueError):
        Settings()


def test_load_config_file(tmp_path):
    """Test key = value parsing with comments and flag spellings."""
    path = tmp_path / "run.cfg"
    path.write_text(
        "# study settings\n"
        "\n"
        "alpha = 0.01\n"
        "--max-horizon = 5000   # cap\n"
        "ks_mode=exact\n"
    )
    assert load_config_file(path) == {"alpha": "0.01", "max_horizon": "5000", "ks_mode": "exact"}


def test_load_config_file_errors(tmp_path):
    """Test that malformed lines and duplicate keys are reported with line numbers."""
    malformed = tmp_path / "malformed.cfg"
    malformed.write_text("alpha = 0.01\nreps\n")
    with pytest.raises(ValueError, match="malformed.cfg:2"):
        load_config_file(malformed)

    duplicate = tmp_path / "duplicate.cfg"
    duplicate.write_text("reps = 10\nseed = 1\n--reps = 20\n")
    with pytest.raises(ValueError, match="duplicate.cfg:3: duplicate key 'reps'"):
        load_config_file(duplicate)

    with pytest.raises(OSError):
        load_config_file(tmp_path / "absent.cfg")
