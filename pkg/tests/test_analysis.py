import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ogtt.analysis import (QUANTILE_NAMES, AnalysisError, predict_g3h, predictive_band,
                           summarize, theta0_flag)
from ogtt.inference import PriorSpec, sample_prior
from ogtt.model import FixedSettings, PatientParams, glucose_at, simulate
from ogtt.pipeline import fit
from ogtt.sampler import PosteriorSample, SamplerConfig
from ogtt.synth import generate

from .conftest import HEALTHY, RESISTANT


def delta_sample(p: PatientParams, n: int = 1) -> PosteriorSample:
    draws = np.tile(p.as_array(), (n, 1))
    return PosteriorSample(draws, np.zeros(n), 0.0, np.full(4, np.nan))


@pytest.fixture(scope="module")
def healthy_fit():
    fs = FixedSettings()
    pt = generate(HEALTHY, fs, seed=21)
    sample = fit(pt.obs, fs, cfg=SamplerConfig(n_iterations=200_000, seed=21))
    return pt, sample


# predictive band -----------------------------------------------------------

def test_band_of_single_draw_is_that_curve(fs):
    band = predictive_band(delta_sample(HEALTHY), fs)
    g = glucose_at(HEALTHY, fs, band.times)
    for q in band.quantiles:
        np.testing.assert_array_equal(q, g)
    assert band.times[0] == 0.0
    assert len(band.times) == 61


def test_band_median_of_two_draws_is_average(fs):
    other = PatientParams(0.7, 2.0, 0.8, 95.0)
    s = PosteriorSample(np.array([HEALTHY.as_array(), other.as_array()]), np.zeros(2), 0.0,
                        np.full(4, np.nan))
    band = predictive_band(s, fs, horizon=2.0, grid_step=0.1)
    a, b = glucose_at(HEALTHY, fs, band.times), glucose_at(other, fs, band.times)
    np.testing.assert_allclose(band.quantile("q50"), (a + b) / 2, rtol=1e-12)
    np.testing.assert_allclose(band.mean, (a + b) / 2, rtol=1e-12)


def test_band_quantiles_monotone(healthy_fit, fs):
    _, sample = healthy_fit
    for noise in (False, True):
        band = predictive_band(sample, fs, observation_noise=noise)
        assert np.all(np.diff(band.quantiles, axis=0) >= 0)


def test_band_with_noise_is_wider(healthy_fit, fs):
    _, sample = healthy_fit
    latent = predictive_band(sample, fs)
    noisy = predictive_band(sample, fs, observation_noise=True)
    w = lambda b: b.quantile("q95") - b.quantile("q05")
    assert np.all(w(noisy) > w(latent))


def test_band_covers_held_out_truth(healthy_fit, fs):
    pt, sample = healthy_fit
    band = predictive_band(sample, fs, horizon=2.0, grid_step=0.05)
    truth = glucose_at(pt.truth, fs, band.times)
    inside = (band.quantile("q05") <= truth) & (truth <= band.quantile("q95"))
    assert inside.mean() >= 0.9


def test_band_mean_fits_data(healthy_fit, fs):
    pt, sample = healthy_fit
    band = predictive_band(sample, fs, horizon=2.0, grid_step=0.5)
    on_obs = np.isin(band.times, pt.obs.times)
    assert on_obs.sum() == len(pt.obs)
    resid = band.mean[on_obs] - np.asarray(pt.obs.values)
    assert math.sqrt(np.mean(resid ** 2)) <= 2 * fs.sigma


def test_band_subsampling_stability(healthy_fit, fs):
    _, sample = healthy_fit
    a = predictive_band(sample, fs, max_curves=1000)
    b = predictive_band(sample, fs, max_curves=2000)
    assert np.max(np.abs(a.quantiles - b.quantiles)) < 2.0


def test_band_errors(fs):
    empty = PosteriorSample(np.empty((0, 4)), np.empty(0), 0.0, np.full(4, np.nan))
    with pytest.raises(AnalysisError):
        predictive_band(empty, fs)
    with pytest.raises(ValueError):
        predictive_band(delta_sample(HEALTHY), fs, horizon=0.0)


def test_band_aborts_when_many_simulations_fail():
    fs = FixedSettings(a=1e-300)
    bad = PatientParams(1e300, 1.0, 0.5, 150.0)
    with pytest.raises(AnalysisError):
        predictive_band(delta_sample(bad, 3), fs)


# 3 h prediction ------------------------------------------------------------

def test_g3h_fixed_point():
    fs = FixedSettings(v0=0.0)
    pred = predict_g3h(delta_sample(PatientParams(2.0, 0.5, 0.5, fs.gb), 5000), fs)
    assert pred.latent_mean == fs.gb
    assert pred.mean == pytest.approx(fs.gb, abs=0.3)
    assert pred.p_above == 0.0


def test_g3h_delta_posterior_latent_equals_simulation(fs):
    pred = predict_g3h(delta_sample(HEALTHY, 10), fs)
    g3 = simulate(HEALTHY, fs, 3.0).g[-1]
    assert pred.latent_mean == pytest.approx(g3, rel=1e-12)
    assert pred.samples.std() == pytest.approx(fs.sigma, rel=0.5)


def test_g3h_jitter_has_observation_variance(fs):
    pred = predict_g3h(delta_sample(HEALTHY, 20000), fs, seed=4)
    assert pred.samples.var() == pytest.approx(fs.sigma ** 2, rel=0.05)
    lo, hi = pred.latent_mean - 1.96 * fs.sigma, pred.latent_mean + 1.96 * fs.sigma
    assert pred.lo == pytest.approx(lo, abs=0.5)
    assert pred.hi == pytest.approx(hi, abs=0.5)


def test_g3h_resistant_truth_is_high(fs):
    # forward simulation first, then the predictive statement
    assert simulate(RESISTANT, fs, 3.0).g[-1] > 120
    assert predict_g3h(delta_sample(RESISTANT, 2000), fs).p_above > 0.5
    assert predict_g3h(delta_sample(HEALTHY, 2000), fs).p_above < 0.1


@settings(max_examples=30, deadline=None)
@given(st.floats(40, 200), st.floats(0, 60))
def test_g3h_probability_monotone_in_threshold(t1, dt):
    fs = FixedSettings()
    pred = predict_g3h(delta_sample(PatientParams(0.9, 0.5, 0.5, 100.0), 500), fs)
    assert pred.prob_above(t1 + dt) <= pred.prob_above(t1)


def test_g3h_deterministic_given_seed(fs):
    s = delta_sample(HEALTHY, 100)
    assert np.array_equal(predict_g3h(s, fs, seed=3).samples, predict_g3h(s, fs, seed=3).samples)


# summaries -----------------------------------------------------------------

def test_summary_of_constant_draws():
    summ = summarize(delta_sample(HEALTHY, 50))
    for name, value in zip(("theta0", "theta1", "theta2", "g0"), HEALTHY.as_array()):
        s = summ.params[name]
        assert s.sd == 0.0
        assert s.lo == s.hi == s.mean == s.median == value


def test_summary_of_prior_draws(rng):
    draws = sample_prior(PriorSpec(g0_center=100.0), rng, 40000)
    s = PosteriorSample(draws, np.zeros(len(draws)), 0.0, np.ones(4))
    summ = summarize(s)
    se = summ.params["theta0"].sd / math.sqrt(len(draws))
    assert abs(summ.params["theta0"].mean - 8.0) < 3 * se
    assert summ.params["theta0"].lo < summ.params["theta0"].hi


def test_flag_cutoffs():
    assert theta0_flag(0.5) == "low"
    assert theta0_flag(2.0) == "normal"
    assert theta0_flag(4.5) == "high"
    assert theta0_flag(1.0) == "normal" and theta0_flag(4.0) == "normal"
    assert theta0_flag(2.0, (2.5, 5.0)) == "low"
    with pytest.raises(ValueError):
        summarize(delta_sample(HEALTHY), cutoffs=(3.0, 3.0))


def test_healthy_fit_flagged_normal(healthy_fit, fs):
    _, sample = healthy_fit
    summ = summarize(sample, g_3h=predict_g3h(sample, fs))
    assert 1.0 <= summ.params["theta0"].median <= 4.0
    assert summ.theta0_flag == "normal"
    for s in summ.params.values():
        assert s.lo < s.hi
    text = summ.to_text()
    assert "theta0 flag: normal" in text
    assert "not clinical or published values" in text
    assert "P[G(3h) > 120 mg/dL]" in text
    assert all(n in text for n in ("theta0", "theta1", "theta2", "g0"))
    assert QUANTILE_NAMES[0] == "q05"
