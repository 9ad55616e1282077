"""Uniform dispatch over chart kinds: one-step updates and block-wise chart paths."""
from typing import Iterable, Optional, Union

import numpy as np
from scipy.signal import lfilter

from pvalue_spc.charts.core import AlarmRule, ChartFamily, ChartKind, ChartStatistic
from pvalue_spc.charts.ewma import EValueState, EwmaState, EwmaVariant, q_constants
from pvalue_spc.charts.merge import PVALUE_TOLERANCE, clamp_pvalue


class ChartFinalisedError(RuntimeError):
    """Raised when a finalised chart is stepped again."""


class ChartState:
    """Single-writer state of one chart; time starts at 1 with the first p-value."""

    def __init__(self, kind: ChartKind):
        self.kind = kind
        self.time = 0
        self.alarm_count = 0
        self.finalised = False
        self._engine: Optional[Union[EwmaState, EValueState]]
        if kind.family is ChartFamily.RAW:
            self._engine = None
        elif kind.family is ChartFamily.E_VALUE:
            self._engine = EValueState(kind.lam, kind.beta)
        else:
            self._engine = EwmaState(EwmaVariant(kind.family.value), kind.lam, kind.r)

    def advance(self, p: float) -> float:
        """Feed one p-value and return the uncapped chart statistic."""
        if self.finalised:
            raise ChartFinalisedError(f"chart {self.kind.label} was finalised at t={self.time}")
        p = clamp_pvalue(p)
        self.time += 1
        if self._engine is None:
            return p
        return self._engine.step(p)

    def step(self, p: float, rule: AlarmRule) -> ChartStatistic:
        raw = self.advance(p)
        statistic = ChartStatistic.from_raw(self.time, raw, rule)
        if statistic.alarm:
            self.alarm_count += 1
        return statistic

    def finalise(self) -> None:
        self.finalised = True


def chart_step(state: ChartState, p: float, rule: AlarmRule) -> ChartStatistic:
    """Advance ``state`` by one time step under ``rule``."""
    return state.step(p, rule)


def run_chart(kind: ChartKind, pvalues: Iterable[float], rule: AlarmRule) -> list[ChartStatistic]:
    state = ChartState(kind)
    return [state.step(p, rule) for p in pvalues]


def _check_paths(pvalues: np.ndarray) -> np.ndarray:
    paths = np.asarray(pvalues, dtype=float)
    if paths.ndim == 0 or paths.shape[-1] == 0:
        raise ValueError("p-value paths must be a non-empty array with time on the last axis")
    if not np.all(np.isfinite(paths)):
        raise ValueError("p-values must be finite")
    if np.any(paths < -PVALUE_TOLERANCE) or np.any(paths > 1.0 + PVALUE_TOLERANCE):
        raise ValueError("p-values must lie in [0, 1]")
    return np.clip(paths, 0.0, 1.0)


class ChartPath:
    """A chart run over blocks of p-values, with time on the last axis.

    The leading axes index independent charts (for example replications).
    Successive ``extend`` calls continue the same recursion, so a path split
    into blocks gives the statistics of the unsplit path up to round-off.
    """

    def __init__(self, kind: ChartKind):
        self.kind = kind
        self.time = 0
        self._smoothed: Optional[np.ndarray] = None
        # True once an infinite term has entered the average
        self._saturated: Optional[np.ndarray] = None

    def _terms(self, paths: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", over="ignore"):
            if self.kind.family is ChartFamily.E_VALUE:
                return self.kind.beta * paths ** (self.kind.beta - 1.0)
            return paths**self.kind.r

    def _smooth(self, terms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lam = self.kind.lam
        infinite = np.isinf(terms)
        saturated = np.logical_or.accumulate(infinite, axis=-1)
        finite_terms = np.where(infinite, 0.0, terms)
        if self._smoothed is None:
            # S_1 = x_1 is the recursion started from a virtual S_0 = x_1
            start = finite_terms[..., 0]
        else:
            start = self._smoothed
            saturated |= self._saturated[..., np.newaxis]
        zi = ((1.0 - lam) * start)[..., np.newaxis]
        smoothed, _ = lfilter([lam], [1.0, lam - 1.0], finite_terms, axis=-1, zi=zi)
        self._smoothed = smoothed[..., -1]
        self._saturated = saturated[..., -1]
        return smoothed, saturated

    def extend(self, pvalues: np.ndarray) -> np.ndarray:
        """Uncapped statistics for the next block of p-values."""
        paths = _check_paths(pvalues)
        n_steps = paths.shape[-1]
        times = np.arange(self.time + 1, self.time + n_steps + 1)
        self.time += n_steps

        if self.kind.family is ChartFamily.RAW:
            return paths.copy()

        smoothed, saturated = self._smooth(self._terms(paths))
        if self.kind.family is ChartFamily.E_VALUE:
            return np.where(saturated, 0.0, 1.0 / smoothed)

        variant = EwmaVariant(self.kind.family.value)
        constants = q_constants(variant, self.kind.lam, self.kind.r, times)
        with np.errstate(divide="ignore"):
            stats = constants * smoothed ** (1.0 / self.kind.r)
        return np.where(saturated, 0.0, stats)


def chart_paths(kind: ChartKind, pvalues: np.ndarray) -> np.ndarray:
    """Uncapped statistics for every row of an (N, T) array of p-value paths.

    Row i of the result equals feeding row i through a fresh ChartState.
    """
    paths = np.asarray(pvalues, dtype=float)
    if paths.ndim == 1:
        paths = paths[np.newaxis, :]
    if paths.ndim != 2:
        raise ValueError("p-value paths must form an (N, T) array")
    return ChartPath(kind).extend(paths)
