#!/usr/bin/env python3
"""Shared fixtures for pvalue_spc tests."""
import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add pvalue_spc package to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

# Monte Carlo checks allow this many standard errors above the nominal level
MC_Z = 4.0
ALPHAS = (0.01, 0.05, 0.1, 0.5)


@pytest.fixture
def assert_superuniform():
    """Check P(p <= alpha) <= alpha + z * sqrt(alpha (1 - alpha) / N) on an alpha grid."""

    def check(pvalues, alphas=ALPHAS, z=MC_Z):
        values = np.asarray(pvalues, dtype=float).ravel()
        n = values.size
        for alpha in alphas:
            frequency = float(np.mean(values <= alpha))
            limit = alpha + z * math.sqrt(alpha * (1.0 - alpha) / n)
            assert frequency <= limit, (
                f"P(p <= {alpha}) = {frequency:.5f} exceeds {limit:.5f} over {n} draws"
            )

    return check


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)
