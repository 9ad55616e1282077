"""Run-length bounds and Monte Carlo run-length estimation.

R_k is the time of the k-th alarm of a chart under an alarm rule. For a
super-uniform chart

    E R_1 >= 1 / (2 alpha) + 1/2
    E R_k >= (nu + 1)(1 - alpha nu / (2k)),   nu = floor(k / alpha)

and for a conditionally super-uniform chart E R_k >= k / alpha.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Callable, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from pvalue_spc.charts.chart import ChartPath
from pvalue_spc.charts.core import AlarmRule, ChartKind
from pvalue_spc.monitoring.localize import (
    AggregateMethod,
    Direction,
    DirectionalPValues,
    localise,
)
from pvalue_spc.sources.rng import replication_rng
from pvalue_spc.sources.scenarios import MULTIVARIATE_DIM, PValueStream, ScenarioSpec

logger = logging.getLogger(__name__)

DEFAULT_MAX_HORIZON = 10_000_000
INITIAL_BLOCK = 32
MAX_BLOCK = 65_536
# Substream key of the one-step family-wise error replications
FWE_SUBSTREAM = 1

StreamFactory = Callable[[np.random.Generator], PValueStream]


def _check_rule(alpha: float, k: int = 1) -> None:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if k < 1:
        raise ValueError(f"k must be a positive integer, got {k}")


def arl_bound_superuniform(alpha: float) -> float:
    _check_rule(alpha)
    return 1.0 / (2.0 * alpha) + 0.5


def karl_bound_superuniform(alpha: float, k: int) -> float:
    _check_rule(alpha, k)
    nu = math.floor(k / alpha)
    return (nu + 1) * (1.0 - alpha * nu / (2.0 * k))


def karl_bound_conditional(alpha: float, k: int) -> float:
    _check_rule(alpha, k)
    return k / alpha


def applicable_bound(source: Union[ScenarioSpec, StreamFactory], kind: ChartKind, rule: AlarmRule) -> float:
    """k/alpha for a conditionally valid chart over a conditionally valid source, else the weaker bound."""
    conditional = (
        isinstance(source, ScenarioSpec) and source.conditionally_valid and kind.conditionally_valid
    )
    if conditional:
        return karl_bound_conditional(rule.alpha, rule.k)
    return karl_bound_superuniform(rule.alpha, rule.k)


class RunLengthConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    rule: AlarmRule
    reps: int = Field(ge=1)
    max_horizon: int = Field(default=DEFAULT_MAX_HORIZON, ge=1)
    seed: int = Field(ge=0)
    threads: int = Field(default=1, ge=1)


class RunLengthSample(BaseModel):
    """Observed R_k per uncensored replication, in replication order."""

    model_config = ConfigDict(frozen=True)

    times_to_k: tuple[int, ...]
    censored_count: int = Field(ge=0)
    max_horizon: int = Field(ge=1)

    @model_validator(mode="after")
    def _check_times(self) -> "RunLengthSample":
        if any(t < 1 or t > self.max_horizon for t in self.times_to_k):
            raise ValueError(f"run lengths must lie in [1, {self.max_horizon}]")
        return self

    @property
    def reps(self) -> int:
        return len(self.times_to_k) + self.censored_count


class RunLengthSummary(BaseModel):
    """Mean and standard error over uncensored runs, plus the restricted mean of min(R_k, H).

    ``mean`` is None when every run was censored; ``censored`` flags any censoring.
    """

    model_config = ConfigDict(frozen=True)

    mean: Optional[float]
    std_error: Optional[float]
    bound: float
    ratio: Optional[float]
    censored: bool
    censored_count: int
    restricted_mean: float
    restricted_std_error: Optional[float]
    reps: int


class RunLengthEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    sample: RunLengthSample
    summary: RunLengthSummary


def _mean_and_error(values: np.ndarray) -> tuple[Optional[float], Optional[float]]:
    if values.size == 0:
        return None, None
    mean = float(values.mean())
    if values.size < 2:
        return mean, None
    return mean, float(values.std(ddof=1) / math.sqrt(values.size))


def summarise(sample: RunLengthSample, bound: float) -> RunLengthSummary:
    observed = np.asarray(sample.times_to_k, dtype=float)
    mean, std_error = _mean_and_error(observed)
    restricted = np.concatenate([observed, np.full(sample.censored_count, float(sample.max_horizon))])
    restricted_mean, restricted_std_error = _mean_and_error(restricted)
    return RunLengthSummary(
        mean=mean,
        std_error=std_error,
        bound=bound,
        ratio=None if mean is None else mean / bound,
        censored=sample.censored_count > 0,
        censored_count=sample.censored_count,
        restricted_mean=restricted_mean,
        restricted_std_error=restricted_std_error,
        reps=sample.reps,
    )


def time_to_k_alarms(
    stream: PValueStream, kind: ChartKind, rule: AlarmRule, max_horizon: int
) -> Optional[int]:
    """Time of the k-th alarm of ``kind`` fed by ``stream``, or None past the horizon."""
    path = ChartPath(kind)
    alarms = 0
    elapsed = 0
    block = INITIAL_BLOCK
    while elapsed < max_horizon:
        n = min(block, max_horizon - elapsed)
        stats = np.minimum(1.0, path.extend(stream.draw(n)))
        hits = np.flatnonzero(stats <= rule.alpha)
        if alarms + hits.size >= rule.k:
            return elapsed + int(hits[rule.k - alarms - 1]) + 1
        alarms += hits.size
        elapsed += n
        block = min(2 * block, MAX_BLOCK)
    return None


def _replicate(
    factory: StreamFactory,
    kind: ChartKind,
    rule: AlarmRule,
    max_horizon: int,
    seed: int,
    index: int,
) -> Optional[int]:
    stream = factory(replication_rng(seed, index))
    return time_to_k_alarms(stream, kind, rule, max_horizon)


def _map_replications(worker: Callable[[int], object], reps: int, threads: int) -> list:
    """worker(i) for i in range(reps), in index order whatever the worker count."""
    if threads == 1:
        return [worker(i) for i in range(reps)]
    chunksize = max(1, reps // (8 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, range(reps), chunksize=chunksize))


def estimate_run_length(
    source: Union[ScenarioSpec, StreamFactory],
    kind: ChartKind,
    rule: AlarmRule,
    reps: int,
    max_horizon: int = DEFAULT_MAX_HORIZON,
    seed: int = 0,
    threads: int = 1,
    bound: Optional[float] = None,
) -> RunLengthEstimate:
    """Monte Carlo estimate of E R_k; replication i uses the substream keyed by (seed, i)."""
    config = RunLengthConfig(rule=rule, reps=reps, max_horizon=max_horizon, seed=seed, threads=threads)
    factory = source.stream if isinstance(source, ScenarioSpec) else source
    if bound is None:
        bound = applicable_bound(source, kind, rule)
    label = source.label if isinstance(source, ScenarioSpec) else getattr(source, "__name__", "stream")
    logger.info(
        f"Simulating {config.reps} runs of {kind.label} on {label} "
        f"(alpha={rule.alpha:g}, k={rule.k}, seed={config.seed}, threads={config.threads})"
    )

    worker = partial(_replicate, factory, kind, rule, config.max_horizon, config.seed)
    times = _map_replications(worker, config.reps, config.threads)
    observed = tuple(t for t in times if t is not None)
    sample = RunLengthSample(
        times_to_k=observed,
        censored_count=len(times) - len(observed),
        max_horizon=config.max_horizon,
    )
    summary = summarise(sample, bound)
    if summary.censored:
        logger.warning(
            f"{summary.censored_count} of {summary.reps} runs reached the horizon "
            f"{config.max_horizon} without {rule.k} alarms"
        )
    if summary.mean is None:
        logger.info(f"All runs censored; restricted mean {summary.restricted_mean:.6g}")
    else:
        logger.info(
            f"Mean R_{rule.k} = {summary.mean:.6g} (st.err {summary.std_error or 0.0:.3g}), "
            f"bound {bound:.6g}, ratio {summary.ratio:.2f}"
        )
    return RunLengthEstimate(sample=sample, summary=summary)


# Localisation study: run to the first alarm, count the true directions found,
# and estimate the one-step family-wise error rate


def true_directions(scenario: ScenarioSpec) -> frozenset[tuple[int, Direction]]:
    """The (coordinate, direction) pairs that actually moved in a multivariate scenario."""
    if not scenario.is_multivariate:
        raise ValueError(f"scenario {scenario.family.value} is not multivariate")
    if scenario.delta == 0.0:
        return frozenset()
    # Mean vector (delta, 0, ..., 0, -delta)
    if scenario.delta > 0:
        first, last = Direction.ABOVE, Direction.BELOW
    else:
        first, last = Direction.BELOW, Direction.ABOVE
    return frozenset({(0, first), (MULTIVARIATE_DIM - 1, last)})


class LocalisationRun(BaseModel):
    model_config = ConfigDict(frozen=True)

    run_length: Optional[int]
    ooc_found: int = Field(ge=0)


class LocalisationStudySummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean_run_length: Optional[float]
    run_length_std_error: Optional[float]
    mean_ooc: Optional[float]
    mean_fwe: float
    censored_count: int
    reps: int
    fwe_reps: int


def _localisation_run(
    scenario: ScenarioSpec,
    alpha: float,
    method: AggregateMethod,
    max_horizon: int,
    seed: int,
    index: int,
) -> LocalisationRun:
    stream = scenario.directional_stream(replication_rng(seed, index))
    truth = true_directions(scenario)
    elapsed = 0
    block = INITIAL_BLOCK
    while elapsed < max_horizon:
        n = min(block, max_horizon - elapsed)
        for offset, pairs in enumerate(stream.draw(n), start=1):
            report = localise(DirectionalPValues.from_array(pairs), alpha, method)
            if report.alarm:
                found = sum(1 for claim in report.directions if claim in truth)
                return LocalisationRun(run_length=elapsed + offset, ooc_found=found)
        elapsed += n
        block = min(2 * block, MAX_BLOCK)
    return LocalisationRun(run_length=None, ooc_found=0)


def _one_step_error(
    scenario: ScenarioSpec, alpha: float, method: AggregateMethod, seed: int, index: int
) -> bool:
    """Whether the t = 1 report makes at least one false directional claim."""
    stream = scenario.directional_stream(replication_rng(seed, index, substream=FWE_SUBSTREAM))
    report = localise(DirectionalPValues.from_array(stream.draw(1)[0]), alpha, method)
    truth = true_directions(scenario)
    return any(claim not in truth for claim in report.directions)


def localisation_study(
    scenario: ScenarioSpec,
    alpha: float,
    reps: int,
    fwe_reps: int,
    method: AggregateMethod = AggregateMethod.BONFERRONI,
    max_horizon: int = DEFAULT_MAX_HORIZON,
    seed: int = 0,
    threads: int = 1,
) -> LocalisationStudySummary:
    """Mean run length and #OOC over ``reps`` runs, and the mean one-step FWE over ``fwe_reps``."""
    if reps < 1 or fwe_reps < 1:
        raise ValueError(f"need at least one replication, got reps={reps}, fwe_reps={fwe_reps}")
    true_directions(scenario)
    logger.info(
        f"Localisation study on {scenario.label}: alpha={alpha:g}, method={AggregateMethod(method).value}, "
        f"reps={reps}, fwe_reps={fwe_reps}, seed={seed}"
    )
    run_worker = partial(_localisation_run, scenario, alpha, method, max_horizon, seed)
    runs = _map_replications(run_worker, reps, threads)
    fwe_worker = partial(_one_step_error, scenario, alpha, method, seed)
    errors = _map_replications(fwe_worker, fwe_reps, threads)

    finished = [run for run in runs if run.run_length is not None]
    lengths = np.asarray([run.run_length for run in finished], dtype=float)
    mean_run_length, std_error = _mean_and_error(lengths)
    censored_count = reps - len(finished)
    if censored_count:
        logger.warning(f"{censored_count} of {reps} localisation runs reached the horizon {max_horizon}")
    return LocalisationStudySummary(
        mean_run_length=mean_run_length,
        run_length_std_error=std_error,
        mean_ooc=float(np.mean([run.ooc_found for run in finished])) if finished else None,
        mean_fwe=float(np.mean(errors)),
        censored_count=censored_count,
        reps=reps,
        fwe_reps=fwe_reps,
    )
