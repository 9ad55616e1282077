"""Seeded data-generating processes mapped to p-value streams.

Univariate scenarios yield one p-value per time step through ``draw``.
Multivariate scenarios yield, per time step, a (d, 2) block of one-sided
p-values: column 0 tests for a downward shift of coordinate j (P^(j,<=)),
column 1 for an upward shift (P^(j,>=)).
"""
import math
from abc import ABC, abstractmethod
from enum import Enum
from typing import Iterator, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.signal import lfilter
from scipy.special import ndtr

from pvalue_spc.sources.normal import ar1_sup_p_many, two_sided_p_many
from pvalue_spc.sources.rng import SeedLike, as_generator, open_uniform, standard_normal
from pvalue_spc.sources.two_sample import (
    EXACT_CUTOFF,
    Alternative,
    TestMode,
    TwoSampleData,
    ks_two_sample_p,
    mann_whitney_one_sided_p,
)

SAMPLE_SIZE_SPREAD = 10
MULTIVARIATE_DIM = 3


class ScenarioFamily(str, Enum):
    IID_UNIFORM = "iid-uniform"
    ONE_PHASE_NORMAL = "one-phase-normal"
    TWO_PHASE_NORMAL = "two-phase-normal"
    AR1 = "ar1"
    KS = "ks"
    MV_NORMAL = "mv-normal"
    MV_CAUCHY = "mv-cauchy"


class OocLaw(str, Enum):
    """Laws of the monitoring samples in the KS scenario.

    shift: N(mu, 1), param mu. scale: N(0, s2), param s2 (a variance).
    cauchy: standard Cauchy. dyn_mean: N(mu_t, 1) with mu_t ~ N(0, v), param v.
    dyn_var: N(0, s2_t) with s2_t ~ chi^2_df, param df.
    """

    NONE = "none"
    SHIFT = "shift"
    SCALE = "scale"
    CAUCHY = "cauchy"
    DYN_MEAN = "dyn_mean"
    DYN_VAR = "dyn_var"


PARAMETRISED_LAWS = (OocLaw.SHIFT, OocLaw.SCALE, OocLaw.DYN_MEAN, OocLaw.DYN_VAR)


class Ar1Output(str, Enum):
    MARGINAL = "marginal"
    SUP = "sup"


class MultivariateFamily(str, Enum):
    NORMAL = "normal"
    CAUCHY = "cauchy"


class PValueStream(ABC):
    """An endless, single-writer stream of p-values."""

    @abstractmethod
    def draw(self, n: int) -> np.ndarray:
        """The next ``n`` p-values."""

    def __iter__(self) -> Iterator[float]:
        return self

    def __next__(self) -> float:
        return float(self.draw(1)[0])


class UniformStream(PValueStream):
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def draw(self, n: int) -> np.ndarray:
        return open_uniform(self.rng, n)


class OnePhaseNormalStream(PValueStream):
    """P_t = 2 (1 - Phi(|X_t|)) with X_t ~ N(delta, 1)."""

    def __init__(self, rng: np.random.Generator, delta: float = 0.0):
        self.rng = rng
        self.delta = delta

    def draw(self, n: int) -> np.ndarray:
        return two_sided_p_many(self.delta + standard_normal(self.rng, n))


class TwoPhaseNormalStream(PValueStream):
    """P_t from Z_t = (X_t - X_0) / sqrt(2) with one baseline X_0 reused at every step."""

    def __init__(self, rng: np.random.Generator, delta: float = 0.0, x0: Optional[float] = None):
        self.rng = rng
        self.delta = delta
        self.x0 = float(standard_normal(rng, 1)[0]) if x0 is None else float(x0)

    def draw(self, n: int) -> np.ndarray:
        xt = self.delta + standard_normal(self.rng, n)
        return two_sided_p_many((xt - self.x0) / math.sqrt(2.0))


class Ar1Stream(PValueStream):
    """X_t = delta + beta X_{t-1} + eps_t with eps_t ~ N(0, 1 - beta^2) and X_0 ~ N(0, 1).

    Emits the marginal p-value 2 (1 - Phi(|X_t|)) and the sup p-value over
    the unknown coefficient; ``output`` picks the one ``draw`` returns.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        beta: float,
        delta: float = 0.0,
        output: Ar1Output = Ar1Output.SUP,
    ):
        if not -1.0 < beta < 1.0:
            raise ValueError(f"AR(1) coefficient beta must lie in (-1, 1), got {beta}")
        self.rng = rng
        self.beta = beta
        self.delta = delta
        self.output = Ar1Output(output)
        self.sigma = math.sqrt(1.0 - beta * beta)
        self.x_prev = float(standard_normal(rng, 1)[0])

    def draw_states(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """(X_{t-1}, X_t) for the next n steps."""
        innovations = self.delta + self.sigma * standard_normal(self.rng, n)
        x, _ = lfilter([1.0], [1.0, -self.beta], innovations, zi=[self.beta * self.x_prev])
        previous = np.concatenate([[self.x_prev], x[:-1]])
        self.x_prev = float(x[-1])
        return previous, x

    def draw_pair(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """(marginal, sup) p-values for the next n steps."""
        previous, x = self.draw_states(n)
        return two_sided_p_many(x), ar1_sup_p_many(x, previous)

    def draw(self, n: int) -> np.ndarray:
        marginal, sup = self.draw_pair(n)
        return sup if self.output is Ar1Output.SUP else marginal


def _draw_sample_size(rng: np.random.Generator, n0: int) -> int:
    """N_t ~ DiscUnif[n0 - 10, n0 + 10], both ends included."""
    return int(rng.integers(n0 - SAMPLE_SIZE_SPREAD, n0 + SAMPLE_SIZE_SPREAD + 1))


def _check_baseline_size(n0: int) -> int:
    if n0 <= SAMPLE_SIZE_SPREAD:
        raise ValueError(f"baseline size n0 must exceed {SAMPLE_SIZE_SPREAD}, got {n0}")
    return n0


class KsStream(PValueStream):
    """Two-phase KS monitoring with variable sample sizes against one N(0, 1) baseline."""

    def __init__(
        self,
        rng: np.random.Generator,
        n0: int,
        ooc: OocLaw = OocLaw.NONE,
        ooc_param: Optional[float] = None,
        mode: TestMode = TestMode.AUTO,
        exact_cutoff: int = EXACT_CUTOFF,
    ):
        self.rng = rng
        self.n0 = _check_baseline_size(n0)
        self.ooc = OocLaw(ooc)
        self.ooc_param = _check_ooc_param(self.ooc, ooc_param)
        self.mode = TestMode(mode)
        self.exact_cutoff = exact_cutoff
        self.baseline = tuple(standard_normal(rng, n0).tolist())
        self.last_sample_size: Optional[int] = None

    def _monitoring_sample(self, size: int) -> np.ndarray:
        z = standard_normal(self.rng, size)
        if self.ooc is OocLaw.NONE:
            return z
        if self.ooc is OocLaw.SHIFT:
            return self.ooc_param + z
        if self.ooc is OocLaw.SCALE:
            return math.sqrt(self.ooc_param) * z
        if self.ooc is OocLaw.CAUCHY:
            return z / np.abs(standard_normal(self.rng, size))
        if self.ooc is OocLaw.DYN_MEAN:
            return math.sqrt(self.ooc_param) * standard_normal(self.rng, 1)[0] + z
        return math.sqrt(self.rng.chisquare(self.ooc_param)) * z

    def draw(self, n: int) -> np.ndarray:
        pvalues = np.empty(n)
        for step in range(n):
            size = _draw_sample_size(self.rng, self.n0)
            self.last_sample_size = size
            data = TwoSampleData(
                baseline=self.baseline,
                current=tuple(self._monitoring_sample(size).tolist()),
            )
            pvalues[step] = ks_two_sample_p(data, self.mode, self.exact_cutoff)
        return pvalues


def equicorrelation_cholesky(rho: float, d: int) -> np.ndarray:
    """Cholesky factor of the d x d matrix with unit diagonal and rho elsewhere."""
    sigma = np.full((d, d), rho)
    np.fill_diagonal(sigma, 1.0)
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"equicorrelation rho={rho} is not positive definite in dimension {d}") from exc


class MultivariateStream:
    """d-variate scenario with mean (delta, 0, ..., 0, -delta) and equicorrelated scale.

    The normal family is one-phase with Z-test p-values. The Cauchy family is
    two-phase: X = mu + Z / sqrt(S) with Z ~ N(0, Sigma) and S ~ chi^2_1,
    a baseline of n0 vectors, and one-sided Mann-Whitney p-values per coordinate.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        family: MultivariateFamily,
        delta: float = 0.0,
        rho: float = 0.0,
        n0: Optional[int] = None,
        d: int = MULTIVARIATE_DIM,
        exact_cutoff: int = EXACT_CUTOFF,
    ):
        if d < 2:
            raise ValueError(f"multivariate scenarios need d >= 2, got {d}")
        self.rng = rng
        self.family = MultivariateFamily(family)
        self.d = d
        self.mean = np.zeros(d)
        self.mean[0], self.mean[-1] = delta, -delta
        self.chol = equicorrelation_cholesky(rho, d)
        self.exact_cutoff = exact_cutoff
        self.baseline: Optional[np.ndarray] = None
        if self.family is MultivariateFamily.CAUCHY:
            if n0 is None:
                raise ValueError("the multivariate Cauchy scenario needs a baseline size n0")
            self.n0 = _check_baseline_size(n0)
            self.baseline = self._cauchy_vectors(self.n0, np.zeros(d))
        elif n0 is not None:
            raise ValueError("the multivariate normal scenario is one-phase and takes no n0")

    def _gaussian_vectors(self, n: int) -> np.ndarray:
        return standard_normal(self.rng, n * self.d).reshape(n, self.d) @ self.chol.T

    def _cauchy_vectors(self, n: int, location: np.ndarray) -> np.ndarray:
        z = self._gaussian_vectors(n)
        s = standard_normal(self.rng, n) ** 2
        return location + z / np.sqrt(s)[:, np.newaxis]

    def draw(self, n: int) -> np.ndarray:
        """An (n, d, 2) array of (P^(j,<=), P^(j,>=)) per step and coordinate."""
        out = np.empty((n, self.d, 2))
        if self.family is MultivariateFamily.NORMAL:
            z = self.mean + self._gaussian_vectors(n)
            out[..., 0] = ndtr(z)
            out[..., 1] = ndtr(-z)
            return out
        for step in range(n):
            size = _draw_sample_size(self.rng, self.n0)
            current = self._cauchy_vectors(size, self.mean)
            for j in range(self.d):
                data = TwoSampleData(
                    baseline=tuple(self.baseline[:, j].tolist()),
                    current=tuple(current[:, j].tolist()),
                )
                out[step, j, 0] = mann_whitney_one_sided_p(
                    data, Alternative.LESS, exact_cutoff=self.exact_cutoff
                )
                out[step, j, 1] = mann_whitney_one_sided_p(
                    data, Alternative.GREATER, exact_cutoff=self.exact_cutoff
                )
        return out


def _check_ooc_param(ooc: OocLaw, ooc_param: Optional[float]) -> Optional[float]:
    if ooc in PARAMETRISED_LAWS:
        if ooc_param is None:
            raise ValueError(f"OOC law {ooc.value} needs a parameter")
        if ooc is not OocLaw.SHIFT and ooc_param <= 0.0:
            raise ValueError(f"OOC law {ooc.value} needs a positive parameter, got {ooc_param}")
        return float(ooc_param)
    if ooc_param is not None:
        raise ValueError(f"OOC law {ooc.value} takes no parameter")
    return None


def gen_iid_uniform(seed: SeedLike) -> UniformStream:
    return UniformStream(as_generator(seed))


def gen_one_phase_normal(seed: SeedLike, delta: float = 0.0) -> OnePhaseNormalStream:
    return OnePhaseNormalStream(as_generator(seed), delta)


def gen_two_phase_normal(
    seed: SeedLike, delta: float = 0.0, x0: Optional[float] = None
) -> TwoPhaseNormalStream:
    return TwoPhaseNormalStream(as_generator(seed), delta, x0)


def gen_ar1(
    beta: float, delta: float, seed: SeedLike, output: Ar1Output = Ar1Output.SUP
) -> Ar1Stream:
    return Ar1Stream(as_generator(seed), beta, delta, output)


def gen_ks_scenario(
    n0: int,
    ooc: OocLaw,
    seed: SeedLike,
    ooc_param: Optional[float] = None,
    mode: TestMode = TestMode.AUTO,
    exact_cutoff: int = EXACT_CUTOFF,
) -> KsStream:
    return KsStream(as_generator(seed), n0, ooc, ooc_param, mode, exact_cutoff)


def gen_multivariate(
    family: MultivariateFamily,
    delta: float,
    rho: float,
    n0: Optional[int],
    seed: SeedLike,
    exact_cutoff: int = EXACT_CUTOFF,
) -> MultivariateStream:
    return MultivariateStream(as_generator(seed), family, delta, rho, n0, exact_cutoff=exact_cutoff)


# Parameters each family accepts; anything else set explicitly is an error
_ALLOWED_PARAMETERS = {
    ScenarioFamily.IID_UNIFORM: set(),
    ScenarioFamily.ONE_PHASE_NORMAL: {"delta"},
    ScenarioFamily.TWO_PHASE_NORMAL: {"delta"},
    ScenarioFamily.AR1: {"beta", "delta", "ar1_output"},
    ScenarioFamily.KS: {"n0", "ooc", "ooc_param", "ks_mode", "exact_cutoff"},
    ScenarioFamily.MV_NORMAL: {"delta", "rho"},
    ScenarioFamily.MV_CAUCHY: {"delta", "rho", "n0", "exact_cutoff"},
}


class ScenarioSpec(BaseModel):
    """A scenario family with its parameters."""

    model_config = ConfigDict(frozen=True)

    family: ScenarioFamily
    delta: float = 0.0
    beta: Optional[float] = Field(default=None, gt=-1.0, lt=1.0)
    rho: float = Field(default=0.0, gt=-1.0, lt=1.0)
    n0: Optional[int] = None
    ooc: OocLaw = OocLaw.NONE
    ooc_param: Optional[float] = None
    ar1_output: Ar1Output = Ar1Output.SUP
    ks_mode: TestMode = TestMode.AUTO
    exact_cutoff: int = Field(default=EXACT_CUTOFF, ge=1)

    @model_validator(mode="after")
    def _check_parameters(self) -> "ScenarioSpec":
        allowed = _ALLOWED_PARAMETERS[self.family]
        extra = sorted(self.model_fields_set - allowed - {"family"})
        if extra:
            raise ValueError(f"parameter {extra[0]} does not apply to scenario {self.family.value}")
        if not math.isfinite(self.delta):
            raise ValueError(f"delta must be finite, got {self.delta}")
        if self.family is ScenarioFamily.AR1 and self.beta is None:
            raise ValueError("the ar1 scenario needs beta")
        if self.family in (ScenarioFamily.KS, ScenarioFamily.MV_CAUCHY):
            if self.n0 is None:
                raise ValueError(f"the {self.family.value} scenario needs n0")
            _check_baseline_size(self.n0)
        if self.family is ScenarioFamily.KS:
            _check_ooc_param(self.ooc, self.ooc_param)
        if self.is_multivariate:
            equicorrelation_cholesky(self.rho, MULTIVARIATE_DIM)
        return self

    @property
    def is_multivariate(self) -> bool:
        return self.family in (ScenarioFamily.MV_NORMAL, ScenarioFamily.MV_CAUCHY)

    @property
    def conditionally_valid(self) -> bool:
        """Whether the in-control stream is super-uniform given its own past."""
        if self.family is ScenarioFamily.AR1:
            return self.ar1_output is Ar1Output.SUP
        return self.family in (ScenarioFamily.IID_UNIFORM, ScenarioFamily.ONE_PHASE_NORMAL)

    @property
    def in_control(self) -> bool:
        if self.family is ScenarioFamily.KS:
            return self.ooc is OocLaw.NONE
        return self.delta == 0.0

    @property
    def label(self) -> str:
        parts = []
        for name in sorted(self.model_fields_set - {"family"}):
            value = getattr(self, name)
            parts.append(f"{name}={value.value if isinstance(value, Enum) else value}")
        return f"{self.family.value}({', '.join(parts)})" if parts else self.family.value

    def stream(self, rng: np.random.Generator) -> PValueStream:
        if self.family is ScenarioFamily.IID_UNIFORM:
            return UniformStream(rng)
        if self.family is ScenarioFamily.ONE_PHASE_NORMAL:
            return OnePhaseNormalStream(rng, self.delta)
        if self.family is ScenarioFamily.TWO_PHASE_NORMAL:
            return TwoPhaseNormalStream(rng, self.delta)
        if self.family is ScenarioFamily.AR1:
            return Ar1Stream(rng, self.beta, self.delta, self.ar1_output)
        if self.family is ScenarioFamily.KS:
            return KsStream(rng, self.n0, self.ooc, self.ooc_param, self.ks_mode, self.exact_cutoff)
        raise ValueError(f"scenario {self.family.value} yields directional p-values; use directional_stream")

    def directional_stream(self, rng: np.random.Generator) -> MultivariateStream:
        if self.family is ScenarioFamily.MV_NORMAL:
            return MultivariateStream(rng, MultivariateFamily.NORMAL, self.delta, self.rho)
        if self.family is ScenarioFamily.MV_CAUCHY:
            return MultivariateStream(
                rng,
                MultivariateFamily.CAUCHY,
                self.delta,
                self.rho,
                self.n0,
                exact_cutoff=self.exact_cutoff,
            )
        raise ValueError(f"scenario {self.family.value} is univariate; use stream")
