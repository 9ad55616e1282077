"""Shared vocabulary for p-value charts: p-values, alarm rules, chart kinds and statistics."""
from enum import Enum
from typing import Annotated, Optional

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, model_validator

from pvalue_spc.charts.merge import check_exponent, clamp_pvalue


class CapacityError(ValueError):
    """Raised when an exact computation would enumerate too many terms."""


PValue = Annotated[float, BeforeValidator(clamp_pvalue)]


class AlarmRule(BaseModel):
    """Raise an alarm whenever the chart statistic is at most alpha; stop at the k-th alarm."""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(gt=0.0, le=1.0)
    k: int = Field(default=1, ge=1)

    def is_alarm(self, clamped: float) -> bool:
        return clamped <= self.alpha


class ChartFamily(str, Enum):
    RAW = "raw"
    Q = "q"
    Q_TILDE = "q-tilde"
    Q_BAR = "q-bar"
    E_VALUE = "e-value"


class ChartKind(BaseModel):
    """A chart family together with its smoothing parameters.

    ``lam`` is the EWMA learning rate, ``r`` the merging exponent of the
    Q-type charts and ``beta`` the calibrator exponent of the e-value chart.
    """

    model_config = ConfigDict(frozen=True)

    family: ChartFamily = ChartFamily.RAW
    lam: Optional[float] = None
    r: Optional[float] = None
    beta: Optional[float] = None

    @model_validator(mode="after")
    def _check_parameters(self) -> "ChartKind":
        if self.family is ChartFamily.RAW:
            if self.lam is not None or self.r is not None or self.beta is not None:
                raise ValueError("the raw chart takes no lambda, r or beta")
            return self

        if self.lam is None or not 0.0 < self.lam < 1.0:
            raise ValueError(f"lambda must lie in (0, 1), got {self.lam}")

        if self.family is ChartFamily.E_VALUE:
            if self.r is not None:
                raise ValueError("the e-value chart takes no merging exponent r")
            if self.beta is None or not 0.0 < self.beta < 1.0:
                raise ValueError(f"calibrator beta must lie in (0, 1), got {self.beta}")
            return self

        if self.beta is not None:
            raise ValueError("beta applies to the e-value chart only")
        if self.r is None:
            raise ValueError(f"the {self.family.value} chart needs a merging exponent r")
        check_exponent(self.r)
        if self.family is ChartFamily.Q_BAR and self.r < 1.0:
            raise ValueError(f"the q-bar chart requires r >= 1, got r={self.r}")
        return self

    @classmethod
    def raw(cls) -> "ChartKind":
        return cls(family=ChartFamily.RAW)

    @classmethod
    def q(cls, lam: float, r: float) -> "ChartKind":
        return cls(family=ChartFamily.Q, lam=lam, r=r)

    @classmethod
    def q_tilde(cls, lam: float, r: float) -> "ChartKind":
        return cls(family=ChartFamily.Q_TILDE, lam=lam, r=r)

    @classmethod
    def q_bar(cls, lam: float, r: float) -> "ChartKind":
        return cls(family=ChartFamily.Q_BAR, lam=lam, r=r)

    @classmethod
    def e_value(cls, lam: float, beta: float) -> "ChartKind":
        return cls(family=ChartFamily.E_VALUE, lam=lam, beta=beta)

    @property
    def conditionally_valid(self) -> bool:
        """Whether the chart keeps conditional super-uniformity of its input."""
        return self.family in (ChartFamily.RAW, ChartFamily.Q_BAR)

    @property
    def label(self) -> str:
        if self.family is ChartFamily.RAW:
            return "raw"
        if self.family is ChartFamily.E_VALUE:
            return f"e-value(lambda={self.lam:g}, beta={self.beta:g})"
        return f"{self.family.value}(lambda={self.lam:g}, r={self.r:g})"


class ChartStatistic(BaseModel):
    """The chart output at one time step, before and after capping at 1."""

    model_config = ConfigDict(frozen=True)

    time: int = Field(ge=1)
    raw: float = Field(ge=0.0)
    clamped: PValue
    alarm: bool

    @model_validator(mode="after")
    def _check_consistent(self) -> "ChartStatistic":
        if self.clamped != min(1.0, self.raw):
            raise ValueError(f"clamped value {self.clamped} does not equal min(1, {self.raw})")
        return self

    @classmethod
    def from_raw(cls, time: int, raw: float, rule: AlarmRule) -> "ChartStatistic":
        clamped = min(1.0, raw)
        return cls(time=time, raw=raw, clamped=clamped, alarm=rule.is_alarm(clamped))
