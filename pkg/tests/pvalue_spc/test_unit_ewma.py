#!/usr/bin/env python3
"""Unit tests for the EWMA-like p-value charts and the e-value chart."""
import math
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad

# Add pvalue_spc package to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from pvalue_spc.charts.chart import chart_paths, run_chart
from pvalue_spc.charts.core import AlarmRule, ChartKind
from pvalue_spc.charts.ewma import (
    EValueState,
    EwmaState,
    EwmaVariant,
    calibrate_p_to_e,
    e_chart_step,
    ewma_weights,
    q_constant,
    q_constants,
    q_step,
    qtilde_agreement_time,
)
from pvalue_spc.charts.merge import generalized_mean

# (lambda, r) cells of the simulation study
STUDY_GRID = [(0.5, -0.9), (0.5, -0.8), (0.8, 1.0), (0.9, 1.0), (0.95, 1.0)]


def test_ewma_weights_examples():
    """w_{t,1} = (1-lam)^(t-1) and w_{t,s} = lam (1-lam)^(t-s)."""
    assert ewma_weights(0.5, 3).weights == pytest.approx((0.25, 0.25, 0.5))
    assert ewma_weights(0.5, 1).weights == (1.0,)
    assert ewma_weights(0.1, 2).weights == pytest.approx((0.9, 0.1))
    with pytest.raises(ValueError):
        ewma_weights(0.5, 0)
    with pytest.raises(ValueError):
        ewma_weights(1.0, 3)


def test_q_constant_examples():
    """Constants of the three chart variants."""
    assert q_constant(EwmaVariant.Q_TILDE, 0.9, 1.0) == pytest.approx(1.0 / 0.9)
    assert q_constant(EwmaVariant.Q, 0.5, 1.0, t=1) == pytest.approx(1.0)
    assert q_constant(EwmaVariant.Q_BAR, 0.25, 2.0) == pytest.approx(2.0)
    assert q_constant(EwmaVariant.Q, 0.5, -0.5, t=7) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        q_constant(EwmaVariant.Q_BAR, 0.5, 0.5)


@pytest.mark.parametrize("variant", list(EwmaVariant))
@pytest.mark.parametrize("lam, r", [(0.1, 1.0), (0.3, 2.5), (0.6, 1.0), (0.5, -0.5)])
def test_q_constants_match_scalar_constant(variant, lam, r):
    """The vectorised constants agree with q_constant at every time."""
    if variant is EwmaVariant.Q_BAR and r < 1.0:
        pytest.skip("q-bar needs r >= 1")
    times = np.arange(1, 60)
    expected = [q_constant(variant, lam, r, int(t)) for t in times]
    assert q_constants(variant, lam, r, times) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("lam", [0.05, 0.1, 0.3, 0.5, 0.7, 0.95])
def test_qtilde_agreement_time(lam):
    """Smallest t with (1 - lam)^(t - 1) <= lam."""
    t = 1
    while (1.0 - lam) ** (t - 1) > lam:
        t += 1
    assert qtilde_agreement_time(lam) == t
    assert qtilde_agreement_time(0.5) == 2


def test_q_step_examples():
    """Hand-evaluated recursions."""
    q_bar = EwmaState(EwmaVariant.Q_BAR, 0.5, 1.0)
    assert [q_step(q_bar, 0.1), q_step(q_bar, 0.2)] == pytest.approx([0.2, 0.3])

    q = EwmaState(EwmaVariant.Q, 0.5, 1.0)
    assert q_step(q, 0.1) == pytest.approx(0.1)

    q_tilde = EwmaState(EwmaVariant.Q_TILDE, 0.5, 1.0)
    assert [q_step(q_tilde, 0.1), q_step(q_tilde, 0.2)] == pytest.approx([0.2, 0.3])


def test_zero_pvalue_with_negative_r_alarms_for_good():
    """A zero p-value with r < 0 gives statistic 0 from then on."""
    state = EwmaState(EwmaVariant.Q, 0.5, -0.5)
    q_step(state, 0.4)
    assert q_step(state, 0.0) == 0.0
    assert q_step(state, 0.9) == 0.0


@pytest.mark.parametrize("variant", list(EwmaVariant))
@pytest.mark.parametrize("lam, r", [(0.1, 1.0), (0.5, 2.0), (0.8, 1.0), (0.3, -0.5), (0.5, -0.9), (0.2, 0.5)])
def test_recursion_matches_explicit_weights(variant, lam, r, rng):
    """S_t from the recursion equals the weighted mean with explicit weights."""
    if variant is EwmaVariant.Q_BAR and r < 1.0:
        pytest.skip("q-bar needs r >= 1")
    for _ in range(5):
        pvalues = rng.random(int(rng.integers(1, 51)))
        state = EwmaState(variant, lam, r)
        for t, p in enumerate(pvalues, start=1):
            statistic = q_step(state, float(p))
            explicit = q_constant(variant, lam, r, t) * generalized_mean(
                r, ewma_weights(lam, t), pvalues[:t]
            )
            assert statistic == pytest.approx(explicit, rel=1e-10)


@pytest.mark.parametrize("lam, r", [(0.1, 1.0), (0.3, 2.0), (0.5, -0.5), (0.7, 1.0), (0.2, 0.5)])
def test_q_tilde_dominates_q_and_running_minimum(lam, r, rng):
    """Q-tilde >= Q and Q-tilde >= min_{s <= t} P_s."""
    pvalues = rng.random((50, 80))
    q = chart_paths(ChartKind.q(lam, r), pvalues)
    q_tilde = chart_paths(ChartKind.q_tilde(lam, r), pvalues)
    assert np.all(q_tilde >= q)
    running_min = np.minimum.accumulate(pvalues, axis=1)
    assert np.all(q_tilde >= running_min * (1 - 1e-12))


@pytest.mark.parametrize("lam, r", [(0.5, 1.0), (0.7, 1.0), (0.6, 2.0), (0.9, 3.0)])
def test_three_variants_agree_after_first_step(lam, r, rng):
    """For lam >= 1/2 and r >= 1, Q = Q-tilde = Q-bar from t = 2 on."""
    rule = AlarmRule(alpha=0.05)
    pvalues = rng.random(30).tolist()
    q = [s.raw for s in run_chart(ChartKind.q(lam, r), pvalues, rule)]
    q_tilde = [s.raw for s in run_chart(ChartKind.q_tilde(lam, r), pvalues, rule)]
    q_bar = [s.raw for s in run_chart(ChartKind.q_bar(lam, r), pvalues, rule)]

    assert q[1:] == q_tilde[1:] == q_bar[1:]
    assert q[0] == pytest.approx(pvalues[0], rel=1e-12)
    assert q_tilde[0] == q_bar[0] == pytest.approx(lam ** (-1.0 / r) * pvalues[0])


@pytest.mark.slow
@pytest.mark.parametrize("lam, r", STUDY_GRID)
@pytest.mark.parametrize("family", ["q", "q-tilde"])
def test_q_charts_are_superuniform(family, lam, r, assert_superuniform):
    """P(min(1, Q_t) <= alpha) <= alpha at every t <= 20 under uniform inputs."""
    generator = np.random.default_rng(int(1000 * lam) + int(10 * r))
    pvalues = generator.random((200_000, 20))
    kind = ChartKind(family=family, lam=lam, r=r)
    stats = np.minimum(1.0, chart_paths(kind, pvalues))
    for t in range(20):
        assert_superuniform(stats[:, t])


@pytest.mark.slow
@pytest.mark.parametrize("lam", [0.8, 0.9, 0.95])
def test_q_bar_chart_is_superuniform(lam, assert_superuniform):
    """The conditionally valid chart is also marginally super-uniform."""
    generator = np.random.default_rng(int(1000 * lam))
    pvalues = generator.random((200_000, 20))
    stats = np.minimum(1.0, chart_paths(ChartKind.q_bar(lam, 1.0), pvalues))
    for t in range(20):
        assert_superuniform(stats[:, t])


def test_calibrator_examples():
    """beta p^(beta - 1), infinite at zero."""
    assert calibrate_p_to_e(0.5, 0.25) == pytest.approx(1.0)
    assert calibrate_p_to_e(0.5, 1.0) == pytest.approx(0.5)
    assert calibrate_p_to_e(0.5, 0.0) == math.inf
    with pytest.raises(ValueError):
        calibrate_p_to_e(1.0, 0.5)
    with pytest.raises(ValueError):
        calibrate_p_to_e(0.0, 0.5)


@pytest.mark.parametrize("beta", [0.5, 0.7, 0.9])
def test_calibrator_integrates_to_one(beta):
    """The calibrator is admissible: its integral over [0, 1] is 1."""
    integral, _ = quad(lambda p: calibrate_p_to_e(beta, p), 0.0, 1.0, epsabs=1e-12, limit=200)
    assert integral == pytest.approx(1.0, abs=1e-8)


def test_e_chart_step_examples():
    """Q^e = min(1, 1 / E~)."""
    state = EValueState(0.5, 0.5)
    assert e_chart_step(state, 1.0 / 64.0) == pytest.approx(0.25)
    assert state.e_value == pytest.approx(4.0)

    state = EValueState(0.5, 0.5)
    assert e_chart_step(state, 1.0) == 1.0
    assert state.e_value == pytest.approx(0.5)

    state = EValueState(0.5, 0.5)
    outputs = [e_chart_step(state, 0.25), e_chart_step(state, 0.25)]
    assert outputs == pytest.approx([1.0, 1.0])
    assert state.e_value == pytest.approx(1.0)


def test_e_value_is_convex_combination(rng):
    """E~_t lies between the smallest and largest e-value seen so far."""
    state = EValueState(0.3, 0.6)
    seen = []
    for p in rng.random(100):
        e_chart_step(state, float(p))
        seen.append(calibrate_p_to_e(0.6, float(p)))
        assert min(seen) * (1 - 1e-12) <= state.e_value <= max(seen) * (1 + 1e-12)


def test_e_value_mean_at_most_one():
    """Under uniform inputs the smoothed e-value has mean at most 1."""
    generator = np.random.default_rng(77)
    pvalues = generator.random((100_000, 10))
    kind = ChartKind.e_value(0.4, 0.8)
    e_values = 1.0 / chart_paths(kind, pvalues)[:, -1]
    standard_error = e_values.std(ddof=1) / math.sqrt(e_values.size)
    assert e_values.mean() <= 1.0 + 4.0 * standard_error
