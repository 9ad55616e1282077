"""p-values from normal test statistics: one- and two-phase Z-tests and the AR(1) sup-p-value."""
import math
from typing import Union

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

ArrayLike = Union[float, np.ndarray]

# Beyond this |z| the tail is taken through log Phi.
LOG_TAIL_Z = 8.0
LOG_TWO = math.log(2.0)


def std_normal_cdf(x: ArrayLike) -> ArrayLike:
    """Phi(x), accurate in both tails."""
    return ndtr(x)


def std_normal_quantile(u: ArrayLike) -> ArrayLike:
    """Phi^-1(u) for u in [0, 1]; the endpoints map to -inf and +inf."""
    values = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(values)) or np.any(values < 0.0) or np.any(values > 1.0):
        raise ValueError("normal quantiles need probabilities in [0, 1]")
    return ndtri(u)


def _check_finite(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value}")


def z_two_sided_log_p(z: float) -> float:
    """log of 2 Phi(-|z|), finite for every finite z."""
    _check_finite(z=z)
    return min(0.0, LOG_TWO + float(log_ndtr(-abs(z))))


def z_two_sided_p(z: float) -> float:
    """2 (1 - Phi(|z|)), computed as 2 Phi(-|z|) to keep the tail accurate.

    Far tails go through log Phi and underflow to 0 only below the smallest double.
    """
    _check_finite(z=z)
    if abs(z) > LOG_TAIL_Z:
        return math.exp(z_two_sided_log_p(z))
    return min(1.0, float(2.0 * ndtr(-abs(z))))


def two_phase_normal_p(x0: float, xt: float) -> float:
    """Two-sided p-value of Z_t = (X_t - X_0) / sqrt(2) for a reused baseline X_0."""
    _check_finite(x0=x0, xt=xt)
    return z_two_sided_p((xt - x0) / math.sqrt(2.0))


def ar1_sup_p(xt: float, xprev: float) -> float:
    """sup over |b| < 1 of the conditional AR(1) p-value, in closed form.

    Equals 2 (1 - Phi(sqrt([xt^2 - xprev^2]_+))).
    """
    _check_finite(xt=xt, xprev=xprev)
    return z_two_sided_p(math.sqrt(max(0.0, xt * xt - xprev * xprev)))


def ar1_conditional_p(xt: float, xprev: float, b: float) -> float:
    """Two-sided p-value of X_t given X_{t-1} under a unit-variance AR(1) with coefficient b."""
    _check_finite(xt=xt, xprev=xprev, b=b)
    if not -1.0 < b < 1.0:
        raise ValueError(f"AR(1) coefficient must lie in (-1, 1), got {b}")
    return z_two_sided_p((xt - b * xprev) / math.sqrt(1.0 - b * b))


def two_sided_p_many(z: np.ndarray) -> np.ndarray:
    magnitude = np.abs(z)
    near = np.minimum(1.0, 2.0 * ndtr(-magnitude))
    far = np.exp(LOG_TWO + log_ndtr(-np.maximum(magnitude, LOG_TAIL_Z)))
    return np.where(magnitude > LOG_TAIL_Z, far, near)


def ar1_sup_p_many(xt: np.ndarray, xprev: np.ndarray) -> np.ndarray:
    return two_sided_p_many(np.sqrt(np.maximum(0.0, xt * xt - xprev * xprev)))
