"""Two-sample rank tests between a Phase I baseline and a monitoring sample.

Exact null distributions assume continuous data. When the combined sample
contains ties, both tests fall back to their large-sample approximations and
flag the result as approximate.
"""
import logging
import math
from enum import Enum
from functools import cached_property, lru_cache

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.special import kolmogorov, ndtr

logger = logging.getLogger(__name__)

EXACT_CUTOFF = 10_000


class TestMode(str, Enum):
    EXACT = "exact"
    ASYMPTOTIC = "asymptotic"
    AUTO = "auto"


class Alternative(str, Enum):
    GREATER = "greater"
    LESS = "less"


class TwoSampleData(BaseModel):
    """Baseline sample X_0 (size n0) and current sample X_t (size nt)."""

    model_config = ConfigDict(frozen=True)

    baseline: tuple[float, ...] = Field(min_length=1)
    current: tuple[float, ...] = Field(min_length=1)

    @field_validator("baseline", "current")
    @classmethod
    def _check_finite(cls, values: tuple[float, ...]) -> tuple[float, ...]:
        if not all(math.isfinite(v) for v in values):
            raise ValueError("samples must contain finite values only")
        return values

    @property
    def n0(self) -> int:
        return len(self.baseline)

    @property
    def nt(self) -> int:
        return len(self.current)

    @cached_property
    def sorted_baseline(self) -> np.ndarray:
        return np.sort(np.asarray(self.baseline, dtype=float))

    @cached_property
    def sorted_current(self) -> np.ndarray:
        return np.sort(np.asarray(self.current, dtype=float))

    @cached_property
    def has_ties(self) -> bool:
        pooled = np.concatenate([self.sorted_baseline, self.sorted_current])
        return np.unique(pooled).size < pooled.size


class TwoSampleTestResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    statistic: float
    p_value: float = Field(ge=0.0, le=1.0)
    method: TestMode
    approximate: bool


def _resolve_mode(data: TwoSampleData, mode: TestMode, exact_cutoff: int, test_name: str) -> TestMode:
    mode = TestMode(mode)
    if mode is TestMode.AUTO:
        feasible = data.n0 * data.nt <= exact_cutoff and not data.has_ties
        return TestMode.EXACT if feasible else TestMode.ASYMPTOTIC
    if mode is TestMode.EXACT and data.has_ties:
        logger.warning(f"{test_name}: ties in the pooled sample, using the asymptotic p-value")
        return TestMode.ASYMPTOTIC
    return mode


# Kolmogorov-Smirnov

def _ks_scaled_statistic(data: TwoSampleData) -> int:
    """max_x |n_t i(x) - n0 j(x)| = n0 nt D as an exact integer."""
    x0, xt = data.sorted_baseline, data.sorted_current
    pooled = np.concatenate([x0, xt])
    below0 = np.searchsorted(x0, pooled, side="right")
    belowt = np.searchsorted(xt, pooled, side="right")
    return int(np.max(np.abs(below0 * data.nt - belowt * data.n0)))


@lru_cache(maxsize=65536)
def _ks_exact_sf(m: int, n: int, c: int) -> float:
    """P(n0 nt D >= c) under the null, as the mass of lattice paths that leave the band.

    A uniformly random path from (0, 0) to (m, n) steps from (i, j) to (i + 1, j)
    with probability (m - i) / (m + n - i - j). Mass is pushed one anti-diagonal
    at a time and absorbed at the first point with |i n - j m| >= c, so the tail
    is a sum of positive terms and keeps its relative precision far out.
    """
    if c <= 0:
        return 1.0
    i = np.arange(m + 1)
    mass = np.zeros(m + 1)
    mass[0] = 1.0
    outside = 0.0
    for s in range(m + n):
        remaining = m + n - s
        step_i = mass * (m - i) / remaining
        nxt = mass * np.maximum(n - (s - i), 0) / remaining
        nxt[1:] += step_i[:-1]
        crossed = np.abs(i * n - (s + 1 - i) * m) >= c
        outside += float(nxt[crossed].sum())
        nxt[crossed] = 0.0
        mass = nxt
    return min(1.0, outside)


def ks_two_sample_test(
    data: TwoSampleData,
    mode: TestMode = TestMode.AUTO,
    exact_cutoff: int = EXACT_CUTOFF,
) -> TwoSampleTestResult:
    """Two-sided KS test of equal laws; the statistic is D = sup |F_0 - F_t|."""
    method = _resolve_mode(data, mode, exact_cutoff, "KS test")
    m, n = data.n0, data.nt
    scaled = _ks_scaled_statistic(data)
    statistic = scaled / (m * n)
    if method is TestMode.EXACT:
        p_value = _ks_exact_sf(m, n, scaled)
    else:
        effective = m * n / (m + n)
        p_value = float(min(1.0, kolmogorov(math.sqrt(effective) * statistic)))
    return TwoSampleTestResult(
        statistic=statistic,
        p_value=p_value,
        method=method,
        approximate=method is not TestMode.EXACT,
    )


def ks_two_sample_p(
    data: TwoSampleData,
    mode: TestMode = TestMode.AUTO,
    exact_cutoff: int = EXACT_CUTOFF,
) -> float:
    return ks_two_sample_test(data, mode, exact_cutoff).p_value


# Mann-Whitney

def _u_statistic(data: TwoSampleData) -> float:
    """#{(baseline, current) pairs with current larger} + half the tied pairs."""
    x0, xt = data.sorted_baseline, data.sorted_current
    strictly_below = np.searchsorted(x0, xt, side="left")
    at_or_below = np.searchsorted(x0, xt, side="right")
    return float(np.sum(strictly_below) + 0.5 * np.sum(at_or_below - strictly_below))


@lru_cache(maxsize=256)
def _u_null_cdf(m: int, n: int) -> np.ndarray:
    """P(U <= u) for u = 0..mn, from the Gaussian binomial coefficient [m+n choose m]_q."""
    counts = np.zeros(m * n + 1)
    counts[0] = 1.0
    for i in range(1, m + 1):
        # times (1 - q^(n+i))
        shift = n + i
        if shift <= m * n:
            counts[shift:] -= counts[:-shift].copy()
        # divided by (1 - q^i): a running sum along each residue class mod i
        padded = np.zeros(-(-counts.size // i) * i)
        padded[: counts.size] = counts
        counts = np.cumsum(padded.reshape(-1, i), axis=0).ravel()[: counts.size]
        counts /= counts.sum()
    logger.debug(f"Built the exact Mann-Whitney null table for sizes ({m}, {n})")
    cdf = np.minimum(1.0, np.cumsum(np.maximum(counts, 0.0)))
    cdf.setflags(write=False)
    return cdf


def _tie_correction(data: TwoSampleData) -> float:
    pooled = np.concatenate([data.sorted_baseline, data.sorted_current])
    _, tie_sizes = np.unique(pooled, return_counts=True)
    return float(np.sum(tie_sizes**3 - tie_sizes))


def mann_whitney_test(
    data: TwoSampleData,
    alternative: Alternative = Alternative.GREATER,
    mode: TestMode = TestMode.AUTO,
    exact_cutoff: int = EXACT_CUTOFF,
) -> TwoSampleTestResult:
    """One-sided Mann-Whitney U test.

    ``greater`` gives small p-values when the current sample is stochastically
    larger than the baseline, ``less`` when it is smaller.
    """
    alternative = Alternative(alternative)
    method = _resolve_mode(data, mode, exact_cutoff, "Mann-Whitney test")
    m, n = data.n0, data.nt
    u = _u_statistic(data)
    if method is TestMode.EXACT:
        cdf = _u_null_cdf(m, n)
        u_int = int(round(u))
        # U is symmetric about mn/2, so P(U >= u) = P(U <= mn - u)
        at_most = u_int if alternative is Alternative.LESS else m * n - u_int
        p_value = float(cdf[at_most])
    else:
        total = m + n
        variance = m * n / 12.0 * ((total + 1) - _tie_correction(data) / (total * (total - 1)))
        if variance <= 0.0:
            p_value = 1.0
        else:
            sd = math.sqrt(variance)
            centred = u - m * n / 2.0
            if alternative is Alternative.GREATER:
                p_value = float(ndtr(-(centred - 0.5) / sd))
            else:
                p_value = float(ndtr((centred + 0.5) / sd))
    return TwoSampleTestResult(
        statistic=u,
        p_value=min(1.0, max(0.0, p_value)),
        method=method,
        approximate=method is not TestMode.EXACT,
    )


def mann_whitney_one_sided_p(
    data: TwoSampleData,
    direction: Alternative = Alternative.GREATER,
    mode: TestMode = TestMode.AUTO,
    exact_cutoff: int = EXACT_CUTOFF,
) -> float:
    return mann_whitney_test(data, direction, mode, exact_cutoff).p_value
