import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from multimarker.stats import (
    DegenerateIntervalError,
    InvGammaParams,
    ParameterError,
    RngStream,
    TruncNormalParams,
    categorical_rows,
    invgamma_logpdf,
    invgamma_rvs,
    log_density_truncated_normal,
    sample_categorical,
    sample_inverse_gamma,
    sample_truncated_normal,
    truncnorm_logpdf,
    truncnorm_lower_rvs,
    truncnorm_rvs,
)

N = 100_000


def within_se(draws, mean, var, k=3.0):
    return abs(draws.mean() - mean) <= k * math.sqrt(var / draws.size)


def test_untruncated_moments():
    x = truncnorm_rvs(np.zeros(N), 1.0, -np.inf, np.inf, RngStream(1))
    assert within_se(x, 0.0, 1.0)


def test_half_normal_mean(oracles):
    x = truncnorm_rvs(np.zeros(N), 1.0, 0.0, np.inf, RngStream(2))
    assert within_se(x, oracles["halfnormal_mean"], oracles["halfnormal_var"])
    assert x.min() >= 0


def test_far_mean_unaffected_by_truncation():
    x = truncnorm_rvs(np.full(N, 10.0), 1.0, 0.0, np.inf, RngStream(3))
    assert within_se(x, 10.0, 1.0)


def test_two_sided_interval(oracles):
    x = truncnorm_rvs(np.full(N, 2.0), 1.5**2, 1.0, 4.0, RngStream(4))
    assert within_se(x, oracles["trunc_2_1.5_1_4_mean"], oracles["trunc_2_1.5_1_4_var"])
    assert x.min() >= 1.0 and x.max() <= 4.0


@pytest.mark.parametrize("sampler", ["general", "lower"])
def test_far_tail_sampling(oracles, sampler):
    rng = RngStream(5)
    if sampler == "general":
        x = truncnorm_rvs(np.zeros(N), 1.0, 10.0, np.inf, rng)
    else:
        x = truncnorm_lower_rvs(np.zeros(N), np.ones(N), 10.0, rng)
    assert x.min() >= 10.0
    assert within_se(x, oracles["tail10_mean"], oracles["tail10_var"])


def test_left_tail_reflects():
    x = truncnorm_rvs(np.zeros(1000), 1.0, -np.inf, -12.0, RngStream(6))
    assert x.max() <= -12.0 and x.min() > -13.0


@pytest.mark.parametrize("lower,upper", [(0.0, 5e-324), (1e160, np.inf)])
def test_degenerate_interval_named(lower, upper):
    with pytest.raises(DegenerateIntervalError, match="lower="):
        truncnorm_rvs(np.array([0.0]), 1.0, lower, upper, RngStream(0))


@pytest.mark.parametrize(
    "kw",
    [dict(mean=0.0, variance=0.0), dict(mean=0.0, variance=-1.0), dict(mean=0.0, variance=1.0, lower=1.0, upper=1.0)],
)
def test_truncnorm_params_invalid(kw):
    with pytest.raises(ParameterError):
        TruncNormalParams(**kw)


def test_sample_truncated_normal_scalar():
    v = sample_truncated_normal(TruncNormalParams(0.0, 1.0, 0.0, math.inf), RngStream(1))
    assert isinstance(v, float) and v >= 0


@settings(max_examples=60, deadline=None)
@given(
    mean=st.floats(-50, 50),
    sd=st.floats(0.01, 20),
    lower=st.floats(-30, 30),
    width=st.one_of(st.just(math.inf), st.floats(0.05, 40)),
    seed=st.integers(0, 2**32),
)
def test_draws_inside_bounds(mean, sd, lower, width, seed):
    upper = lower + width
    x = truncnorm_rvs(np.full(50, mean), sd * sd, lower, upper, RngStream(seed))
    assert np.all(x >= lower) and np.all(x <= upper)


def test_inverse_gamma_moments(oracles):
    x = invgamma_rvs(np.full(N, 3.0), np.full(N, 2.0), RngStream(7))
    assert within_se(x, oracles["invgamma_3_2_mean"], oracles["invgamma_3_2_var"])
    y = invgamma_rvs(np.full(N, 5.0), np.full(N, 8.0), RngStream(8))
    assert within_se(y, oracles["invgamma_5_8_mean"], oracles["invgamma_5_8_var"])


def test_inverse_gamma_mode(oracles):
    x = invgamma_rvs(np.full(N, 2.0), np.full(N, 3.0), RngStream(9))
    hist, edges = np.histogram(x, bins=np.linspace(0.05, 4, 80))
    k = hist.argmax()
    peak = 0.5 * (edges[k] + edges[k + 1])
    assert abs(peak - oracles["invgamma_2_3_mode"]) < 0.15


@pytest.mark.parametrize("shape,scale", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0), (math.nan, 1.0)])
def test_inverse_gamma_invalid(shape, scale):
    with pytest.raises(ParameterError):
        sample_inverse_gamma(InvGammaParams(shape, scale), RngStream(0))


def test_categorical_degenerate_and_symmetric():
    rng = RngStream(10)
    assert all(sample_categorical([1, 0, 0], rng) == 0 for _ in range(200))
    draws = categorical_rows(np.tile([0.5, 0.5], (N, 1)), rng)
    assert within_se(draws.astype(float), 0.5, 0.25)


def test_categorical_frequencies():
    w = np.array([0.2, 0.3, 0.5])
    draws = categorical_rows(np.tile(w, (N, 1)), RngStream(11))
    freq = np.bincount(draws, minlength=3) / N
    se = np.sqrt(w * (1 - w) / N)
    assert np.all(np.abs(freq - w) <= 3 * se)


@pytest.mark.parametrize("w", [[0, 0, 0], [0.5, -0.1, 0.6], [math.nan, 1.0]])
def test_categorical_invalid(w):
    with pytest.raises(ParameterError):
        sample_categorical(w, RngStream(0))


def test_truncated_log_density(oracles):
    assert log_density_truncated_normal(-1.0, TruncNormalParams(0.0, 1.0, 0.0)) == -math.inf
    assert log_density_truncated_normal(0.0, TruncNormalParams(0.0, 1.0)) == pytest.approx(oracles["normal_logpdf_0"], abs=1e-14)
    assert log_density_truncated_normal(0.5, TruncNormalParams(0.0, 1.0, 0.0)) == pytest.approx(
        oracles["halfnormal_logpdf_0.5"], abs=1e-13
    )


def test_log_densities_match_scipy():
    x = np.linspace(0.1, 9, 50)
    a, b = (1.0 - 2.0) / 1.5, (8.0 - 2.0) / 1.5
    ref = sps.truncnorm(a, b, loc=2.0, scale=1.5).logpdf(x)
    got = truncnorm_logpdf(x, 2.0, 2.25, 1.0, 8.0)
    inside = (x >= 1) & (x <= 8)
    assert np.allclose(got[inside], ref[inside], atol=1e-11)
    assert np.all(np.isneginf(got[~inside]))
    assert np.allclose(invgamma_logpdf(x, 3.0, 2.0), sps.invgamma(3.0, scale=2.0).logpdf(x), atol=1e-12)


def test_stream_determinism_and_children():
    a, b = RngStream(42), RngStream(42)
    assert np.array_equal(a.normal(10), b.normal(10))
    assert a.position == 10
    c1, c2 = RngStream(42).child(1), RngStream(42).child(2)
    assert not np.array_equal(c1.uniform(5), c2.uniform(5))
    assert np.array_equal(RngStream(42).child(1).uniform(5), RngStream(42, key=(1,)).uniform(5))


def test_seed_range():
    with pytest.raises(ParameterError):
        RngStream(-1)
