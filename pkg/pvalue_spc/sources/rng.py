"""Per-replication random substreams.

Replication ``i`` of a run seeded with ``seed`` always draws from the Philox
stream keyed by (seed, substream, i), whichever worker process runs it.
"""
from typing import Union

import numpy as np
from scipy.special import ndtri

SeedLike = Union[int, np.random.Generator]

_UNIT = 2.0**-53


def _check_seed(seed: int) -> int:
    if isinstance(seed, bool) or int(seed) != seed or seed < 0:
        raise ValueError(f"seed must be a nonnegative integer, got {seed!r}")
    return int(seed)


def replication_rng(seed: int, replication: int, substream: int = 0) -> np.random.Generator:
    """Counter-based generator for one replication of one experiment part."""
    seed = _check_seed(seed)
    if replication < 0:
        raise ValueError(f"replication index must be nonnegative, got {replication}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, substream, replication])))


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(_check_seed(seed))))


def open_uniform(rng: np.random.Generator, size: int) -> np.ndarray:
    """Uniforms on the open interval (0, 1) with 53 random bits each."""
    return (rng.integers(0, 2**53, size=size) + 0.5) * _UNIT


def standard_normal(rng: np.random.Generator, size: int) -> np.ndarray:
    """N(0, 1) variates by inversion of open uniforms."""
    return ndtri(open_uniform(rng, size))
