"""Merging arbitrarily dependent p-values by weighted generalised means.

For weights w summing to one and an exponent r > -1, r != 0, the weighted
generalised mean M_{r,w}(p) = (sum_t w_t p_t^r)^(1/r) becomes a valid merging
function once it is multiplied by

    (1 + r)^(1/r)                         for r in (-1, 1) minus {0}
    min(1 + r, 1 / w_max)^(1/r)           for r >= 1

Only the tighter constant is offered for r >= 1. The Bonferroni merge
min(1, m * min p) is provided alongside for localisation.
"""
import math
from functools import cached_property
from typing import Annotated, Sequence

import numpy as np
from pydantic import AfterValidator, BaseModel, ConfigDict, Field, field_validator
from scipy.special import logsumexp

WEIGHT_TOLERANCE = 1e-12
# Round-off allowance for p-values computed through Φ and friends
PVALUE_TOLERANCE = 1e-12


def clamp_pvalue(value: float) -> float:
    """Clamp a p-value into [0, 1], rejecting anything further out than round-off."""
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"p-value must be finite, got {value}")
    if value < -PVALUE_TOLERANCE or value > 1.0 + PVALUE_TOLERANCE:
        raise ValueError(f"p-value {value} lies outside [0, 1]")
    return min(1.0, max(0.0, value))


def check_exponent(r: float) -> float:
    """Validate a merging exponent: r > -1 and r != 0."""
    r = float(r)
    if not math.isfinite(r) or r <= -1.0:
        raise ValueError(f"merging exponent r must be finite and exceed -1, got {r}")
    if r == 0.0:
        raise ValueError("merging exponent r = 0 (geometric mean) is not supported")
    return r


MergeExponent = Annotated[float, AfterValidator(check_exponent)]


class WeightVector(BaseModel):
    """Nonnegative weights summing to one."""

    model_config = ConfigDict(frozen=True)

    weights: tuple[float, ...] = Field(min_length=1)

    @field_validator("weights")
    @classmethod
    def _check_weights(cls, weights: tuple[float, ...]) -> tuple[float, ...]:
        for w in weights:
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"weight {w} lies outside [0, 1]")
        total = math.fsum(weights)
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(f"weights sum to {total!r}, not 1 (within {WEIGHT_TOLERANCE})")
        return weights

    @classmethod
    def uniform(cls, m: int) -> "WeightVector":
        if m < 1:
            raise ValueError(f"need at least one weight, got m={m}")
        return cls(weights=(1.0 / m,) * m)

    @property
    def m(self) -> int:
        return len(self.weights)

    @cached_property
    def w_max(self) -> float:
        return max(self.weights)

    @cached_property
    def array(self) -> np.ndarray:
        values = np.asarray(self.weights, dtype=float)
        values.setflags(write=False)
        return values


def merge_constant(r: float, w_max: float) -> float:
    """The validity-restoring multiplier for M_{r,w}."""
    r = check_exponent(r)
    if r < 1.0:
        return (1.0 + r) ** (1.0 / r)
    return min(1.0 + r, 1.0 / w_max) ** (1.0 / r)


def _as_pvalue_array(w: WeightVector, p: Sequence[float] | np.ndarray) -> np.ndarray:
    values = np.asarray(p, dtype=float)
    if values.size == 0:
        raise ValueError("cannot merge an empty list of p-values")
    if values.shape[-1] != w.m:
        raise ValueError(f"got {values.shape[-1]} p-values for {w.m} weights")
    if not np.all(np.isfinite(values)) or np.any(values < 0.0):
        raise ValueError("p-values must be finite and nonnegative")
    return values


def _generalized_mean_last_axis(r: float, weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    if r > 0.0:
        return (values**r @ weights) ** (1.0 / r)

    # r < 0: log-space so that tiny p-values do not overflow p^r
    active = weights > 0.0
    vals = values[..., active]
    has_zero = np.any(vals == 0.0, axis=-1)
    safe = np.where(vals == 0.0, 1.0, vals)
    log_terms = r * np.log(safe) + np.log(weights[active])
    means = np.exp(logsumexp(log_terms, axis=-1) / r)
    return np.where(has_zero, 0.0, means)


def generalized_mean(r: float, w: WeightVector, p: Sequence[float]) -> float:
    """M_{r,w}(p) = (sum_t w_t p_t^r)^(1/r).

    With r < 0 a zero p-value sends the mean to its limit 0.
    """
    r = check_exponent(r)
    values = _as_pvalue_array(w, p)
    if values.ndim != 1:
        raise ValueError("generalized_mean expects a flat list of p-values")
    return float(_generalized_mean_last_axis(r, w.array, values))


def valid_merge(r: float, w: WeightVector, p: Sequence[float]) -> float:
    """Merged statistic constant * M_{r,w}(p); may exceed 1, callers cap it."""
    return merge_constant(r, w.w_max) * generalized_mean(r, w, p)


def valid_merge_many(r: float, w: WeightVector, p: np.ndarray) -> np.ndarray:
    """valid_merge applied to every row of an (N, m) array of p-values."""
    r = check_exponent(r)
    values = _as_pvalue_array(w, p)
    return merge_constant(r, w.w_max) * _generalized_mean_last_axis(r, w.array, values)


def bonferroni_merge(p: Sequence[float]) -> float:
    """min(1, m * min p); every p must lie in [0, 1] up to round-off."""
    if len(p) == 0:
        raise ValueError("cannot merge an empty list of p-values")
    values = [clamp_pvalue(value) for value in p]
    return min(1.0, len(values) * min(values))
