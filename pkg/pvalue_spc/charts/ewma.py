"""EWMA-like p-value charts built on valid merging, and the e-value EWMA chart.

All three Q-type charts share the recursion

    S_1 = P_1^r,    S_t = lam * P_t^r + (1 - lam) * S_{t-1},

and differ only in the constant multiplying S_t^(1/r):

    q        min(1 + r, 1 / w_{t,max})^(1/r) for r >= 1, (1 + r)^(1/r) otherwise
    q-tilde  the same with w_{t,max} replaced by lam (time independent)
    q-bar    lam^(-1/r), r >= 1 only; keeps conditional super-uniformity

with w_{t,max} = max(lam, (1 - lam)^(t - 1)). Statistics are returned
uncapped; the chart layer caps them at 1.
"""
import math
from enum import Enum

import numpy as np

from pvalue_spc.charts.core import clamp_pvalue
from pvalue_spc.charts.merge import WeightVector, check_exponent


class EwmaVariant(str, Enum):
    Q = "q"
    Q_TILDE = "q-tilde"
    Q_BAR = "q-bar"


def check_lambda(lam: float) -> float:
    lam = float(lam)
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    return lam


def ewma_weights(lam: float, t: int) -> WeightVector:
    """Weights w_{t,s} of P_s^r in S_t: (1-lam)^(t-1) for s = 1, lam (1-lam)^(t-s) after."""
    lam = check_lambda(lam)
    if t < 1:
        raise ValueError(f"time index must be at least 1, got t={t}")
    later = lam * (1.0 - lam) ** (t - np.arange(2, t + 1))
    return WeightVector(weights=((1.0 - lam) ** (t - 1), *map(float, later)))


def max_weight(lam: float, t: int) -> float:
    return max(lam, (1.0 - lam) ** (t - 1))


def qtilde_agreement_time(lam: float) -> int:
    """Smallest t with (1 - lam)^(t - 1) <= lam; from then on w_{t,max} = lam."""
    lam = check_lambda(lam)
    t = 1 + max(0, math.ceil(math.log(lam) / math.log(1.0 - lam)))
    while t > 1 and (1.0 - lam) ** (t - 2) <= lam:
        t -= 1
    while (1.0 - lam) ** (t - 1) > lam:
        t += 1
    return t


def q_constant(variant: EwmaVariant, lam: float, r: float, t: int = 1) -> float:
    """The multiplier applied to S_t^(1/r) by each chart variant."""
    lam = check_lambda(lam)
    r = check_exponent(r)
    variant = EwmaVariant(variant)
    if variant is EwmaVariant.Q_BAR:
        if r < 1.0:
            raise ValueError(f"the q-bar chart requires r >= 1, got r={r}")
        return lam ** (-1.0 / r)
    if r < 1.0:
        return (1.0 + r) ** (1.0 / r)
    if variant is EwmaVariant.Q:
        if t < 1:
            raise ValueError(f"time index must be at least 1, got t={t}")
        w_max = max_weight(lam, t)
    else:
        w_max = lam
    if (1.0 + r) * w_max <= 1.0:
        return (1.0 + r) ** (1.0 / r)
    return w_max ** (-1.0 / r)


def q_constants(variant: EwmaVariant, lam: float, r: float, times: np.ndarray) -> np.ndarray:
    """q_constant evaluated at every time index in ``times``."""
    variant = EwmaVariant(variant)
    times = np.asarray(times)
    if variant is not EwmaVariant.Q or r < 1.0:
        return np.full(times.shape, q_constant(variant, lam, r))
    if np.any(times < 1):
        raise ValueError("time indices must be at least 1")
    w_max = np.maximum(lam, (1.0 - lam) ** (times - 1.0))
    return np.where((1.0 + r) * w_max <= 1.0, (1.0 + r) ** (1.0 / r), w_max ** (-1.0 / r))


def _two_sum(a: float, b: float) -> tuple[float, float]:
    total = a + b
    b_virtual = total - a
    a_virtual = total - b_virtual
    return total, (a - a_virtual) + (b - b_virtual)


class EwmaState:
    """Single-writer recursion state of a Q, Q-tilde or Q-bar chart."""

    def __init__(self, variant: EwmaVariant, lam: float, r: float):
        self.variant = EwmaVariant(variant)
        self.lam = check_lambda(lam)
        self.r = check_exponent(r)
        if self.variant is EwmaVariant.Q_BAR and self.r < 1.0:
            raise ValueError(f"the q-bar chart requires r >= 1, got r={self.r}")
        self.t = 0
        self.s_value = 0.0
        self._compensation = 0.0
        self._steady_constant = q_constant(
            EwmaVariant.Q_TILDE if self.variant is EwmaVariant.Q else self.variant,
            self.lam,
            self.r,
        )
        self._steady_from = (
            qtilde_agreement_time(self.lam)
            if self.variant is EwmaVariant.Q and self.r >= 1.0
            else 1
        )

    def _power(self, p: float) -> float:
        if self.r > 0.0:
            return p**self.r
        if p == 0.0:
            return math.inf
        try:
            return math.exp(self.r * math.log(p))
        except OverflowError:
            return math.inf

    def constant(self) -> float:
        if self.t >= self._steady_from:
            return self._steady_constant
        return q_constant(self.variant, self.lam, self.r, self.t)

    def step(self, p: float) -> float:
        x = self._power(p)
        self.t += 1
        if self.t == 1:
            self.s_value, self._compensation = x, 0.0
        elif math.isinf(x) or math.isinf(self.s_value):
            self.s_value, self._compensation = math.inf, 0.0
        else:
            carried = (1.0 - self.lam) * self._compensation
            self.s_value, error = _two_sum(self.lam * x, (1.0 - self.lam) * self.s_value)
            self._compensation = error + carried
        return self.statistic()

    def statistic(self) -> float:
        if self.t == 0:
            raise ValueError("no p-value has been observed yet")
        if math.isinf(self.s_value):
            # r < 0 after a zero p-value: the merged mean is 0 for good
            return 0.0
        return self.constant() * (self.s_value + self._compensation) ** (1.0 / self.r)


def q_step(state: EwmaState, p: float) -> float:
    """Advance an EWMA-like chart by one p-value and return its uncapped statistic."""
    return state.step(clamp_pvalue(p))


def calibrate_p_to_e(beta: float, p: float) -> float:
    """The p-to-e calibrator beta * p^(beta - 1); infinite at p = 0."""
    beta = float(beta)
    if not 0.0 < beta < 1.0:
        raise ValueError(f"calibrator beta must lie in (0, 1), got {beta}")
    p = clamp_pvalue(p)
    if p == 0.0:
        return math.inf
    return beta * p ** (beta - 1.0)


class EValueState:
    """EWMA of calibrated e-values: E~_1 = E_1, E~_t = lam E_t + (1 - lam) E~_{t-1}."""

    def __init__(self, lam: float, beta: float):
        self.lam = check_lambda(lam)
        calibrate_p_to_e(beta, 1.0)
        self.beta = float(beta)
        self.t = 0
        self.e_value = 0.0

    def step(self, p: float) -> float:
        e = calibrate_p_to_e(self.beta, p)
        self.t += 1
        if self.t == 1:
            self.e_value = e
        else:
            self.e_value = self.lam * e + (1.0 - self.lam) * self.e_value
        return self.statistic()

    def statistic(self) -> float:
        """Uncapped 1 / E~; min(1, .) of it is the chart p-value."""
        if self.t == 0:
            raise ValueError("no p-value has been observed yet")
        return 1.0 / self.e_value


def e_chart_step(state: EValueState, p: float) -> float:
    """Advance the e-value chart and return min(1, 1 / E~)."""
    return min(1.0, state.step(p))
