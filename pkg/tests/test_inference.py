import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ogtt.inference import (ObservationSet, PriorSpec, log_likelihood, log_posterior, log_prior,
                            make_target, prior_moments, sample_prior)
from ogtt.model import FixedSettings, PatientParams, glucose_at
from ogtt.pipeline import fit
from ogtt.sampler import SamplerConfig

from .conftest import HEALTHY

SCHEDULE = (0.0, 0.5, 1.0, 2.0)
SPEC = PriorSpec(g0_center=100.0)


def scipy_log_prior(p, spec):
    """Independent evaluation with scipy.stats distributions."""
    g2 = stats.gamma(spec.theta2_shape, scale=1 / spec.theta2_rate)
    mass = g2.cdf(spec.theta2_hi) - g2.cdf(spec.theta2_lo)
    m, sd = spec.g0_center, spec.g0_sd
    return (stats.gamma.logpdf(p.theta0, spec.theta0_shape, scale=1 / spec.theta0_rate)
            + stats.gamma.logpdf(p.theta1, spec.theta1_shape, scale=1 / spec.theta1_rate)
            + g2.logpdf(p.theta2) - math.log(mass)
            + stats.truncnorm.logpdf(p.g0, -m / sd, np.inf, loc=m, scale=sd))


def noiseless_obs(p, fs, schedule=SCHEDULE):
    return ObservationSet(schedule, tuple(glucose_at(p, fs, schedule)))


# ObservationSet ------------------------------------------------------------

def test_observation_set_invariants():
    ObservationSet((0, 1), (90, 150))
    with pytest.raises(ValueError, match="n >= 2"):
        ObservationSet((0,), (90,))
    with pytest.raises(ValueError):
        ObservationSet((0, 1, 1), (90, 150, 140))
    with pytest.raises(ValueError):
        ObservationSet((-1, 1), (90, 150))
    with pytest.raises(ValueError):
        ObservationSet((0, 1), (90, 0))


# priors --------------------------------------------------------------------

def test_default_hyperparameters():
    s = PriorSpec()
    assert (s.theta0_shape, s.theta0_rate) == (2.0, 0.25)
    assert (s.theta1_shape, s.theta1_rate) == (2.0, 0.25)
    assert (s.theta2_shape, s.theta2_rate) == (10.0, 20.0)
    assert (s.theta2_lo, s.theta2_hi) == (1 / 6, 2.0)
    assert s.theta2_shape / s.theta2_rate == 0.5


def test_theta2_below_truncation_is_impossible():
    assert log_prior(replace(HEALTHY, theta2=0.1), SPEC) == -math.inf
    assert log_prior(replace(HEALTHY, theta2=2.01), SPEC) == -math.inf
    assert math.isfinite(log_prior(replace(HEALTHY, theta2=1 / 6), SPEC))
    assert math.isfinite(log_prior(replace(HEALTHY, theta2=2.0), SPEC))


def test_theta0_prior_decreasing_beyond_mode():
    eps = 1e-3
    mode = (SPEC.theta0_shape - 1) / SPEC.theta0_rate
    assert mode == 4.0
    assert log_prior(replace(HEALTHY, theta0=8 + eps), SPEC) < log_prior(
        replace(HEALTHY, theta0=8), SPEC)
    assert log_prior(replace(HEALTHY, theta0=3), SPEC) < log_prior(
        replace(HEALTHY, theta0=4), SPEC)


@pytest.mark.parametrize("p", [HEALTHY, PatientParams(0.3, 12.0, 1.7, 75.0),
                               PatientParams(25.0, 0.01, 0.17, 3.0)])
def test_log_prior_matches_scipy(p):
    assert log_prior(p, SPEC) == pytest.approx(scipy_log_prior(p, SPEC), rel=1e-12, abs=1e-12)


def test_log_prior_requires_resolved_center():
    with pytest.raises(ValueError):
        log_prior(HEALTHY, PriorSpec())


def test_prior_sampler_theta0_mean(rng):
    draws = sample_prior(SPEC, rng, 20000)
    se = draws[:, 0].std() / math.sqrt(len(draws))
    assert abs(draws[:, 0].mean() - 8.0) < 3 * se


def test_prior_sampler_support_and_moments(rng):
    draws = sample_prior(SPEC, rng, 50000)
    assert np.all(draws[:, 2] >= 1 / 6) and np.all(draws[:, 2] <= 2)
    assert np.all(draws[:, :2] > 0) and np.all(draws[:, 3] > 0)
    moments = prior_moments(SPEC)
    for j, name in enumerate(("theta0", "theta1", "theta2", "g0")):
        mean, sd = moments[name]
        assert abs(draws[:, j].mean() - mean) < 4 * sd / math.sqrt(len(draws))


def test_prior_sampler_matches_density(rng):
    # Kolmogorov-Smirnov against the scipy truncated distributions
    draws = sample_prior(SPEC, rng, 5000)
    g2 = stats.gamma(10, scale=1 / 20)
    lo, hi = g2.cdf(1 / 6), g2.cdf(2)
    assert stats.kstest(draws[:, 2], lambda x: (g2.cdf(x) - lo) / (hi - lo)).pvalue > 1e-3
    tn = stats.truncnorm(-10, np.inf, loc=100, scale=10)
    assert stats.kstest(draws[:, 3], tn.cdf).pvalue > 1e-3


# likelihood ----------------------------------------------------------------

def test_likelihood_max_on_noiseless_data(fs):
    obs = noiseless_obs(HEALTHY, fs)
    n = len(obs)
    assert log_likelihood(HEALTHY, fs, obs) == pytest.approx(
        -n / 2 * math.log(2 * math.pi * 25.0), abs=1e-9)


def test_likelihood_one_sigma_residual(fs):
    g = glucose_at(HEALTHY, fs, SCHEDULE)
    vals = g.copy()
    vals[2] += fs.sigma
    obs = ObservationSet(SCHEDULE, tuple(vals))
    top = -len(SCHEDULE) / 2 * math.log(2 * math.pi * fs.sigma ** 2)
    assert log_likelihood(HEALTHY, fs, obs) == pytest.approx(top - 0.5, abs=1e-9)


def test_likelihood_matches_direct_gaussian_sum(fs, rng):
    g = glucose_at(HEALTHY, fs, SCHEDULE)
    obs = ObservationSet(SCHEDULE, tuple(g + rng.normal(0, 5, 4)))
    expected = float(np.sum(stats.norm.logpdf(obs.values, loc=g, scale=fs.sigma)))
    assert log_likelihood(HEALTHY, fs, obs) == pytest.approx(expected, rel=1e-12)


def test_likelihood_needs_positive_sigma():
    obs = ObservationSet((0, 1), (100, 120))
    with pytest.raises(ValueError):
        log_likelihood(HEALTHY, FixedSettings(sigma=0.0), obs)


def test_likelihood_flat_when_sigma_infinite():
    obs = ObservationSet((0, 1), (100, 120))
    assert log_likelihood(HEALTHY, FixedSettings(sigma=math.inf), obs) == 0.0


# posterior -----------------------------------------------------------------

def test_posterior_is_prior_plus_likelihood(fs):
    obs = ObservationSet(SCHEDULE, (98.0, 450.0, 520.0, 240.0))
    spec = PriorSpec().resolved(obs)
    p = PatientParams(2.1, 0.7, 0.45, 97.0)
    assert log_posterior(p, fs, obs, spec) == log_prior(p, spec) + log_likelihood(p, fs, obs)


def test_posterior_out_of_support(fs):
    obs = ObservationSet(SCHEDULE, (98.0, 450.0, 520.0, 240.0))
    for bad in (replace(HEALTHY, theta0=0.0), replace(HEALTHY, theta1=-1.0),
                replace(HEALTHY, theta2=0.1), replace(HEALTHY, g0=0.0)):
        assert log_posterior(bad, fs, obs, PriorSpec()) == -math.inf


def test_posterior_data_perturbation_delta(fs):
    obs = ObservationSet(SCHEDULE, (98.0, 450.0, 520.0, 240.0))
    spec = PriorSpec(g0_center=98.0)
    p = PatientParams(2.1, 0.7, 0.45, 97.0)
    r = obs.values[1] - glucose_at(p, fs, SCHEDULE)[1]
    bumped = list(obs.values)
    bumped[1] += fs.sigma
    delta = (log_posterior(p, fs, ObservationSet(SCHEDULE, tuple(bumped)), spec)
             - log_posterior(p, fs, obs, spec))
    # -((r + s)^2 - r^2) / (2 s^2)
    assert delta == pytest.approx(-r / fs.sigma - 0.5, rel=1e-9)


def test_fused_target_matches_log_posterior(fs, rng):
    obs = ObservationSet(SCHEDULE, (98.0, 450.0, 520.0, 240.0))
    target = make_target(obs, fs, PriorSpec())
    for x in sample_prior(PriorSpec().resolved(obs), rng, 50):
        p = PatientParams.from_array(x)
        assert target(x) == pytest.approx(log_posterior(p, fs, obs, PriorSpec()), rel=1e-12)


valid = st.tuples(st.floats(-2, 40), st.floats(-2, 40), st.floats(0.0, 2.5), st.floats(-20, 250))


@settings(max_examples=200, deadline=None)
@given(valid)
def test_support_indicator(x):
    fs = FixedSettings()
    obs = ObservationSet(SCHEDULE, (98.0, 450.0, 520.0, 240.0))
    p = PatientParams(*x)
    val = log_posterior(p, fs, obs, PriorSpec())
    outside = p.theta0 <= 0 or p.theta1 <= 0 or not (1 / 6 <= p.theta2 <= 2) or p.g0 <= 0
    assert (val == -math.inf) == outside
    if not outside:
        assert math.isfinite(val)


@settings(max_examples=50, deadline=None)
@given(st.floats(1.01, 10.0))
def test_larger_residuals_lower_posterior(scale):
    fs = FixedSettings()
    g = glucose_at(HEALTHY, fs, SCHEDULE)
    resid = np.array([3.0, -4.0, 2.0, 5.0])
    spec = PriorSpec(g0_center=100.0)
    small = ObservationSet(SCHEDULE, tuple(g + resid))
    large = ObservationSet(SCHEDULE, tuple(g + scale * resid))
    assert log_posterior(HEALTHY, fs, large, spec) < log_posterior(HEALTHY, fs, small, spec)


def test_translation_of_data_shifts_g0():
    fs = FixedSettings(v0=0.0)
    base = ObservationSet((0.0, 0.05), (fs.gb, fs.gb))
    cfg = SamplerConfig(n_iterations=60000, burn_in=6000, seed=11)
    means = []
    for k in (0.0, 5.0):
        obs = ObservationSet(base.times, tuple(v + k for v in base.values))
        spec = PriorSpec(g0_center=fs.gb + k)
        means.append(fit(obs, fs, spec, cfg).column("g0").mean())
    assert means[1] - means[0] == pytest.approx(5.0, abs=0.6)
