"""Exact law of the EWMA of IID Unif(0,1) variables.

U~_t = lam * U_t + (1 - lam) * U~_{t-1} with U~_0 = u0 is the constant
(1 - lam)^t u0 plus a weighted sum of t independent uniforms with weights
a_{t,s} = lam (1 - lam)^(t - s). Its density and distribution function are
inclusion-exclusion sums over all 2^t subsets S of the summands:

    f(u) = sum_S (-1)^|S| [u - (1-lam)^t u0 - a_S]_+^(t-1) / ((t-1)! prod a)
    F(u) = sum_S (-1)^|S| [u - (1-lam)^t u0 - a_S]_+^t     / (t!     prod a)

The alternating sums cancel badly when some a_{t,s} are tiny (large lam
and t); such evaluations fall back to exact integer arithmetic on the
dyadic values of the weights, which is slow but exact up to the final
rounding. Evaluation is refused beyond T_CAP summands; use ``sample``
instead.
"""
import logging
import math
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from pvalue_spc.charts.core import CapacityError

logger = logging.getLogger(__name__)

T_CAP = 22
LEFT_TAIL_TOLERANCE = 1e-9
FLOAT_EPSILON = float(np.finfo(float).eps)
FLOAT_ERROR_BUDGET = 1e-12

ArrayLike = Union[float, Sequence[float], np.ndarray]


class UniformEwmaSpec(BaseModel):
    """The law of U~_{lam,t} started from u0."""

    model_config = ConfigDict(frozen=True)

    lam: float = Field(gt=0.0, lt=1.0)
    t: int = Field(ge=1)
    u0: float = Field(ge=0.0, le=1.0)

    @cached_property
    def decay(self) -> float:
        return (1.0 - self.lam) ** self.t

    @cached_property
    def support(self) -> tuple[float, float]:
        return self.decay * self.u0, 1.0 - self.decay * (1.0 - self.u0)

    @cached_property
    def weights(self) -> np.ndarray:
        """a_{t,s} for s = 1..t."""
        return self.lam * (1.0 - self.lam) ** (self.t - np.arange(1, self.t + 1))

    @cached_property
    def mean(self) -> float:
        return 0.5 + self.decay * (self.u0 - 0.5)

    @cached_property
    def _log_weight_product(self) -> float:
        return float(np.sum(np.log(self.weights)))

    @cached_property
    def _subsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Subset sums a_S with signs (-1)^|S|, sorted by a_S."""
        if self.t > T_CAP:
            raise CapacityError(
                f"exact evaluation needs 2^{self.t} terms; t is capped at {T_CAP}, "
                "simulate with sample() instead"
            )
        # Reflected Gray-code order: each new subset costs one addition
        sums = np.zeros(1)
        signs = np.ones(1, dtype=np.int8)
        for a in self.weights:
            sums = np.concatenate([sums, sums[::-1] + a])
            signs = np.concatenate([signs, -signs[::-1]])
        order = np.argsort(sums, kind="stable")
        logger.debug(f"Built {sums.size} subset sums for lam={self.lam}, t={self.t}")
        return sums[order], signs[order]

    @cached_property
    def _integer_weights(self) -> tuple[int, tuple[int, ...]]:
        """(D, A) with a_{t,s} = A_s / D exactly; D is a power of two."""
        ratios = [float(a).as_integer_ratio() for a in self.weights]
        denominator = max(den for _, den in ratios)
        return denominator, tuple(num * (denominator // den) for num, den in ratios)

    @cached_property
    def _exact_subsets(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Integer subset sums A_S with signs, sorted by A_S."""
        _, integer_weights = self._integer_weights
        sums, signs = [0], [1]
        for a in integer_weights:
            sums = sums + [s + a for s in reversed(sums)]
            signs = signs + [-g for g in reversed(signs)]
        order = sorted(range(len(sums)), key=sums.__getitem__)
        logger.debug(f"Built {len(sums)} exact subset sums for lam={self.lam}, t={self.t}")
        return tuple(sums[i] for i in order), tuple(signs[i] for i in order)

    def _lower_tail_exact(self, x: float, power: int) -> float:
        """The same sum in exact dyadic integer arithmetic."""
        denominator, integer_weights = self._integer_weights
        sums, signs = self._exact_subsets
        x_num, x_den = float(x).as_integer_ratio()
        common = max(denominator, x_den)
        x_scaled = x_num * (common // x_den)
        factor = common // denominator
        total = 0
        for a_sum, sign in zip(sums, signs):
            gap = x_scaled - a_sum * factor
            if gap <= 0:
                break
            total += sign * gap**power
        # x - a_S = gap / common and prod a = prod A / denominator^t
        numerator = total * denominator**self.t
        return numerator / (common**power * math.factorial(power) * math.prod(integer_weights))

    def _lower_tail(self, x: float, power: int) -> float:
        """sum_S (-1)^|S| [x - a_S]_+^power / (power! prod a) for shifted x.

        Floating point is used while its rounding-error bound stays within
        FLOAT_ERROR_BUDGET; strongly cancelling sums are redone exactly.
        """
        if x <= 0.0:
            return 0.0
        sums, signs = self._subsets
        n_active = int(np.searchsorted(sums, x, side="left"))
        if n_active == 0:
            return 0.0
        # Sorted sums make the terms descend in magnitude
        terms = signs[:n_active] * (x - sums[:n_active]) ** power
        scale = math.exp(-math.lgamma(power + 1) - self._log_weight_product)
        error_bound = (power + 2) * FLOAT_EPSILON * float(np.abs(terms).sum()) * scale
        if error_bound <= FLOAT_ERROR_BUDGET:
            return math.fsum(terms.tolist()) * scale
        return self._lower_tail_exact(x, power)


def _as_points(u: ArrayLike) -> tuple[np.ndarray, bool]:
    points = np.asarray(u, dtype=float)
    return np.atleast_1d(points), points.ndim == 0


def pdf(spec: UniformEwmaSpec, u: ArrayLike) -> Union[float, np.ndarray]:
    """Density of U~_{lam,t} at u (scalar or array)."""
    points, scalar = _as_points(u)
    lower, upper = spec.support
    shift = spec.decay * spec.u0
    values = np.zeros_like(points)
    for i, point in enumerate(points):
        if not lower <= point <= upper:
            continue
        if point > spec.mean:
            point = 2.0 * spec.mean - point
        values[i] = max(0.0, spec._lower_tail(point - shift, spec.t - 1))
    return float(values[0]) if scalar else values


def cdf(spec: UniformEwmaSpec, u: ArrayLike) -> Union[float, np.ndarray]:
    """Distribution function of U~_{lam,t} at u (scalar or array)."""
    points, scalar = _as_points(u)
    lower, upper = spec.support
    shift = spec.decay * spec.u0
    values = np.empty_like(points)
    for i, point in enumerate(points):
        if point <= lower:
            values[i] = 0.0
        elif point >= upper:
            values[i] = 1.0
        elif point > spec.mean:
            reflected = spec._lower_tail(2.0 * spec.mean - point - shift, spec.t)
            values[i] = 1.0 - reflected
        else:
            values[i] = spec._lower_tail(point - shift, spec.t)
    values = np.clip(values, 0.0, 1.0)
    return float(values[0]) if scalar else values


def moments(spec: UniformEwmaSpec) -> tuple[float, float]:
    """Closed-form mean and variance of U~_{lam,t}."""
    lam = spec.lam
    variance = lam * (1.0 - (1.0 - lam) ** (2 * spec.t)) / (12.0 * (2.0 - lam))
    return spec.mean, variance


class LeftTailReport(BaseModel):
    """Outcome of checking P(U~ <= alpha) <= alpha on a grid of alphas."""

    max_excess: float
    worst_alpha: float
    passed: bool


def left_tail_check(spec: UniformEwmaSpec, alphas: Sequence[float]) -> LeftTailReport:
    """Check left-tail super-uniformity, which holds for alpha <= 1/2 when u0 >= 1/2."""
    if spec.u0 < 0.5:
        raise ValueError(f"left-tail super-uniformity needs u0 >= 0.5, got u0={spec.u0}")
    grid = np.asarray(alphas, dtype=float)
    if grid.size == 0:
        raise ValueError("alpha grid is empty")
    if np.any(grid < 0.0) or np.any(grid > 0.5):
        raise ValueError("alpha grid must lie in [0, 0.5]")
    excess = cdf(spec, grid) - grid
    worst = int(np.argmax(excess))
    max_excess = float(excess[worst])
    return LeftTailReport(
        max_excess=max_excess,
        worst_alpha=float(grid[worst]),
        passed=max_excess <= LEFT_TAIL_TOLERANCE,
    )


def superuniformity_violation(spec: UniformEwmaSpec) -> Optional[float]:
    """An alpha with P(U~ <= alpha) > alpha, or None if none is found."""
    lower, upper = spec.support
    if upper < 1.0:
        return 0.5 * (upper + 1.0)
    # u0 = 1: look just below 1, where the upper tail is thinner than linear
    for eps in np.geomspace(0.5, 1e-7, 400):
        alpha = 1.0 - (1.0 - spec.decay) * eps
        if alpha > lower and cdf(spec, alpha) > alpha:
            return float(alpha)
    return None


def sample(spec: UniformEwmaSpec, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw U~_{lam,t} by running the recursion on fresh uniforms."""
    values = np.full(size, spec.u0)
    for _ in range(spec.t):
        values = spec.lam * rng.random(size) + (1.0 - spec.lam) * values
    return values


def density_grid(spec: UniformEwmaSpec, n_points: int) -> list[tuple[float, float, float]]:
    """(u, pdf, cdf) rows on an even grid of [0, 1]."""
    if n_points < 2:
        raise ValueError(f"density grid needs at least 2 points, got {n_points}")
    grid = np.linspace(0.0, 1.0, n_points)
    densities = pdf(spec, grid)
    probabilities = cdf(spec, grid)
    return [(float(u), float(f), float(p)) for u, f, p in zip(grid, densities, probabilities)]
