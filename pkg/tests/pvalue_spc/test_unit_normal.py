#!/usr/bin/env python3
"""Unit tests for normal-theory p-values and the normal and AR(1) streams."""
import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add pvalue_spc package to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from pvalue_spc.sources.normal import (
    ar1_conditional_p,
    ar1_sup_p,
    ar1_sup_p_many,
    std_normal_cdf,
    std_normal_quantile,
    two_phase_normal_p,
    two_sided_p_many,
    z_two_sided_log_p,
    z_two_sided_p,
)
from pvalue_spc.sources.rng import replication_rng
from pvalue_spc.sources.scenarios import Ar1Output, Ar1Stream, OnePhaseNormalStream, gen_ar1


def test_normal_cdf_and_quantile():
    """Phi is symmetric and Phi^-1 inverts it, endpoints included."""
    x = np.linspace(-8.0, 8.0, 33)
    assert std_normal_cdf(x) + std_normal_cdf(-x) == pytest.approx(np.ones_like(x), rel=1e-15)
    u = np.geomspace(1e-10, 0.5, 40)
    assert std_normal_cdf(std_normal_quantile(u)) == pytest.approx(u, rel=1e-12)
    assert std_normal_quantile(0.0) == -math.inf
    assert std_normal_quantile(1.0) == math.inf
    with pytest.raises(ValueError):
        std_normal_quantile(1.5)
    with pytest.raises(ValueError):
        std_normal_quantile(np.nan)


def test_z_two_sided_p_examples():
    """2 (1 - Phi(|z|))."""
    assert z_two_sided_p(0.0) == 1.0
    assert z_two_sided_p(1.959964) == pytest.approx(0.05, abs=1e-7)
    assert z_two_sided_p(3.0) == z_two_sided_p(-3.0)
    assert z_two_sided_p(37.0) > 0.0


def test_z_two_sided_p_far_tail():
    """Far tails keep their relative precision and stay finite on the log scale."""
    for z in (8.5, 12.0, 20.0, 37.0):
        expected = 2.0 * float(std_normal_cdf(-z))
        assert z_two_sided_p(z) == pytest.approx(expected, rel=1e-10)
        assert two_sided_p_many(np.array([z, -z])) == pytest.approx([expected, expected], rel=1e-10)
    log_p = z_two_sided_log_p(40.0)
    assert math.isfinite(log_p)
    # log 2 Phi(-z) ~ -z^2 / 2 - log(z sqrt(pi / 2)) for large z
    assert log_p == pytest.approx(-800.0 - math.log(40.0 * math.sqrt(math.pi / 2.0)), abs=1e-3)
    assert z_two_sided_log_p(0.0) == 0.0
    assert z_two_sided_log_p(3.0) == pytest.approx(math.log(z_two_sided_p(3.0)), rel=1e-12)


def test_z_two_sided_p_inverts_quantile():
    """The p-value of the z with two-sided tail p is p, deep into the tail."""
    for p in np.geomspace(1e-12, 1.0, 50):
        z = -float(std_normal_quantile(p / 2.0))
        assert z_two_sided_p(z) == pytest.approx(p, rel=1e-10)


def test_two_phase_normal_p():
    """Z = (X_t - X_0) / sqrt(2), symmetric in its arguments."""
    assert two_phase_normal_p(0.0, 0.0) == 1.0
    assert two_phase_normal_p(0.0, 2.0 * math.sqrt(2.0)) == pytest.approx(z_two_sided_p(2.0))
    assert two_phase_normal_p(1.3, -0.4) == two_phase_normal_p(-0.4, 1.3)


def test_ar1_sup_p_examples():
    """sup p-value is 1 when |x_prev| >= |x_t|, else the Z-test at sqrt(x_t^2 - x_prev^2)."""
    assert ar1_sup_p(1.0, 2.0) == 1.0
    assert ar1_sup_p(2.0, 0.0) == pytest.approx(0.04550026389635842, rel=1e-9)
    assert ar1_sup_p(-2.0, 1.0) == pytest.approx(z_two_sided_p(math.sqrt(3.0)))


def test_ar1_sup_p_dominates_conditional_p(rng):
    """The closed form is at least the conditional p-value for every coefficient."""
    betas = np.linspace(-0.99, 0.99, 199)
    for xt, xprev in rng.normal(0.0, 2.0, size=(1000, 2)):
        sup = ar1_sup_p(float(xt), float(xprev))
        worst = max(ar1_conditional_p(float(xt), float(xprev), float(b)) for b in betas)
        assert sup >= worst - 1e-9


def test_non_finite_inputs_rejected():
    """NaN and infinite statistics are errors."""
    with pytest.raises(ValueError):
        z_two_sided_p(math.nan)
    with pytest.raises(ValueError):
        two_phase_normal_p(math.inf, 0.0)
    with pytest.raises(ValueError):
        ar1_sup_p(0.5, math.nan)
    with pytest.raises(ValueError):
        ar1_conditional_p(0.5, 0.1, 1.0)


def test_vectorised_versions_match_scalars(rng):
    """two_sided_p_many and ar1_sup_p_many agree with the scalar functions."""
    x = rng.normal(size=50)
    prev = rng.normal(size=50)
    assert two_sided_p_many(x) == pytest.approx([z_two_sided_p(float(v)) for v in x], rel=1e-14)
    assert ar1_sup_p_many(x, prev) == pytest.approx(
        [ar1_sup_p(float(a), float(b)) for a, b in zip(x, prev)], rel=1e-14
    )


def test_one_phase_stream_is_superuniform(assert_superuniform):
    """In control the one-phase Z-test p-values are uniform."""
    stream = OnePhaseNormalStream(replication_rng(3, 0))
    pvalues = stream.draw(200_000)
    assert np.all((pvalues > 0.0) & (pvalues <= 1.0))
    assert_superuniform(pvalues)


def test_ar1_states_have_unit_variance():
    """The stationary AR(1) keeps Var(X_t) = 1."""
    stream = Ar1Stream(replication_rng(8, 0), beta=0.6)
    _, x = stream.draw_states(400_000)
    assert x.var() == pytest.approx(1.0, rel=0.02)
    assert np.corrcoef(x[:-1], x[1:])[0, 1] == pytest.approx(0.6, abs=0.01)


@pytest.mark.parametrize("beta", [-0.5, 0.3, 0.8])
def test_ar1_sup_p_is_conditionally_superuniform(beta, assert_superuniform):
    """Within buckets of |X_{t-1}| the sup p-value stays super-uniform."""
    stream = Ar1Stream(replication_rng(21, 0), beta=beta)
    previous, x = stream.draw_states(300_000)
    sup = ar1_sup_p_many(x, previous)
    edges = np.quantile(np.abs(previous), [0.0, 1 / 3, 2 / 3, 1.0])
    bucket = np.digitize(np.abs(previous), edges[1:-1])
    for b in range(3):
        assert_superuniform(sup[bucket == b])


@pytest.mark.parametrize("beta", [-0.5, 0.3, 0.8])
def test_ar1_sup_p_dominates_true_coefficient(beta):
    """Pathwise, P* is at least the p-value under the true coefficient."""
    stream = Ar1Stream(replication_rng(4, 1), beta=beta)
    previous, x = stream.draw_states(10_000)
    true_p = two_sided_p_many((x - beta * previous) / math.sqrt(1.0 - beta * beta))
    assert np.all(ar1_sup_p_many(x, previous) >= true_p * (1 - 1e-12))


def test_ar1_marginal_output_without_dependence_is_uniform(assert_superuniform):
    """With beta = 0 the marginal p-values are IID uniform."""
    stream = gen_ar1(0.0, 0.0, 12, output=Ar1Output.MARGINAL)
    pvalues = stream.draw(200_000)
    assert_superuniform(pvalues)
    assert pvalues.mean() == pytest.approx(0.5, abs=0.005)


def test_ar1_draw_pair_continues_the_path():
    """Consecutive draws continue the same AR(1) path."""
    whole = Ar1Stream(replication_rng(9, 0), beta=0.7)
    split = Ar1Stream(replication_rng(9, 0), beta=0.7)
    marginal, sup = whole.draw_pair(20)
    first_marginal, first_sup = split.draw_pair(7)
    second_marginal, second_sup = split.draw_pair(13)
    assert np.concatenate([first_marginal, second_marginal]) == pytest.approx(marginal, rel=1e-12)
    assert np.concatenate([first_sup, second_sup]) == pytest.approx(sup, rel=1e-12)
    with pytest.raises(ValueError):
        Ar1Stream(replication_rng(9, 0), beta=1.0)
