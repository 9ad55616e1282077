"""Directional and coordinate localisation at alarm time.

Per time step and coordinate j there are two one-sided p-values: P^(j,<=)
is small when coordinate j moved down and P^(j,>=) when it moved up. The
procedure

1. combines them into two-sided p-values min(1, 2 min(P^(j,<=), P^(j,>=))),
2. aggregates those into one alarm p-value (Bonferroni or arithmetic mean),
3. on alarm, runs Holm's step-down procedure on the two-sided p-values and
   tags each rejected coordinate with the direction of its smaller one-sided
   p-value (ties go to <=).

Holm's procedure is the shortcut of closed testing with Bonferroni local
tests, which controls the family-wise error rate at alpha. Coordinates are
0-based.
"""
from enum import Enum
from itertools import count
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from pvalue_spc.charts.core import CapacityError, PValue
from pvalue_spc.charts.merge import WeightVector, bonferroni_merge, valid_merge

MAX_ORACLE_DIM = 20


class Direction(str, Enum):
    BELOW = "<="
    ABOVE = ">="


class AggregateMethod(str, Enum):
    BONFERRONI = "bonferroni"
    ARITHMETIC = "arithmetic"


class DirectionalPValues(BaseModel):
    """One-sided p-values (P^(j,<=), P^(j,>=)) for coordinates j = 0..d-1."""

    model_config = ConfigDict(frozen=True)

    p_le: tuple[PValue, ...] = Field(min_length=1)
    p_ge: tuple[PValue, ...] = Field(min_length=1)

    @model_validator(mode="after")
    def _check_lengths(self) -> "DirectionalPValues":
        if len(self.p_le) != len(self.p_ge):
            raise ValueError(f"got {len(self.p_le)} p_le values but {len(self.p_ge)} p_ge values")
        return self

    @property
    def d(self) -> int:
        return len(self.p_le)

    @classmethod
    def from_array(cls, pairs: np.ndarray) -> "DirectionalPValues":
        """Build from a (d, 2) array whose columns are (p_le, p_ge)."""
        pairs = np.asarray(pairs, dtype=float)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise ValueError(f"directional p-values need shape (d, 2), got {pairs.shape}")
        return cls(p_le=tuple(pairs[:, 0].tolist()), p_ge=tuple(pairs[:, 1].tolist()))


class LocalisationReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    two_sided: tuple[float, ...]
    aggregate: float
    alarm: bool
    rejected: tuple[int, ...] = ()
    directions: tuple[tuple[int, Direction], ...] = ()

    @model_validator(mode="after")
    def _check_consistent(self) -> "LocalisationReport":
        if tuple(j for j, _ in self.directions) != self.rejected:
            raise ValueError("every rejected coordinate needs exactly one direction")
        if self.rejected and not self.alarm:
            raise ValueError("rejections are only reported at an alarm")
        return self


def two_sided_combine(p_le: float, p_ge: float) -> float:
    return min(1.0, 2.0 * min(p_le, p_ge))


def aggregate_p(two_sided: Sequence[float], method: AggregateMethod = AggregateMethod.BONFERRONI) -> float:
    """Alarm p-value: min(1, d min p) or min(1, min(2, d) / d * sum p)."""
    method = AggregateMethod(method)
    if len(two_sided) == 0:
        raise ValueError("cannot aggregate an empty list of p-values")
    if method is AggregateMethod.BONFERRONI:
        return bonferroni_merge(two_sided)
    # The arithmetic mean with its r = 1 validity constant
    return min(1.0, valid_merge(1.0, WeightVector.uniform(len(two_sided)), two_sided))


def _check_level(alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def holm_reject(p: Sequence[float], alpha: float) -> frozenset[int]:
    """Holm's step-down procedure at level alpha."""
    alpha = _check_level(alpha)
    values = np.asarray(p, dtype=float)
    if values.size == 0:
        raise ValueError("Holm's procedure needs at least one p-value")
    d = values.size
    order = np.argsort(values, kind="stable")
    rejected = []
    for i, index in enumerate(order):
        if values[index] > alpha / (d - i):
            break
        rejected.append(int(index))
    return frozenset(rejected)


def closed_testing_oracle(p: Sequence[float], alpha: float) -> frozenset[int]:
    """Closed testing with Bonferroni local tests, by enumerating all 2^d - 1 intersections.

    H_j is rejected when every intersection containing j has
    min_{i in J} p_i <= alpha / |J|.
    """
    alpha = _check_level(alpha)
    values = np.asarray(p, dtype=float)
    d = values.size
    if d == 0:
        raise ValueError("closed testing needs at least one p-value")
    if d > MAX_ORACLE_DIM:
        raise CapacityError(f"closed testing enumerates 2^d subsets; d is capped at {MAX_ORACLE_DIM}, got {d}")
    masks = np.arange(1, 2**d)
    members = ((masks[:, np.newaxis] >> np.arange(d)) & 1).astype(bool)
    smallest = np.where(members, values, np.inf).min(axis=1)
    locally_rejected = smallest <= alpha / members.sum(axis=1)
    retained = members[~locally_rejected].any(axis=0)
    return frozenset(int(j) for j in np.flatnonzero(~retained))


def localise(
    dp: DirectionalPValues,
    alpha: float,
    method: AggregateMethod = AggregateMethod.BONFERRONI,
) -> LocalisationReport:
    """One time step of the localisation procedure."""
    alpha = _check_level(alpha)
    two_sided = tuple(two_sided_combine(le, ge) for le, ge in zip(dp.p_le, dp.p_ge))
    aggregate = aggregate_p(two_sided, method)
    alarm = aggregate <= alpha
    if not alarm:
        return LocalisationReport(two_sided=two_sided, aggregate=aggregate, alarm=False)
    rejected = tuple(sorted(holm_reject(two_sided, alpha)))
    directions = tuple(
        (j, Direction.BELOW if dp.p_le[j] <= dp.p_ge[j] else Direction.ABOVE) for j in rejected
    )
    return LocalisationReport(
        two_sided=two_sided,
        aggregate=aggregate,
        alarm=True,
        rejected=rejected,
        directions=directions,
    )


def localise_sequence(
    steps: Iterable[DirectionalPValues],
    alpha: float,
    method: AggregateMethod = AggregateMethod.BONFERRONI,
    stop_at_first_alarm: bool = False,
    times: Optional[Iterable[int]] = None,
) -> Iterator[tuple[int, LocalisationReport]]:
    """(time, report) per step; times default to 1, 2, ... when not given."""
    for time, dp in zip(count(1) if times is None else times, steps):
        report = localise(dp, alpha, method)
        yield time, report
        if stop_at_first_alarm and report.alarm:
            return
