"""Posterior summaries: predictive glucose bands, the 3 h prediction, parameter tables.

Quantiles use linear interpolation between order statistics
(``numpy.quantile(method="linear")``) everywhere.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .model import DEFAULT_STEP, FixedSettings
from .sampler import PosteriorSample

log = logging.getLogger(__name__)

QUANTILE_LEVELS = (0.05, 0.25, 0.5, 0.75, 0.95)
QUANTILE_NAMES = ("q05", "q25", "q50", "q75", "q95")

# theta0 flag cutoffs; package defaults, not published values
THETA0_LOW = 1.0
THETA0_HIGH = 4.0


class AnalysisError(RuntimeError):
    pass


@dataclass
class PredictiveBand:
    times: np.ndarray
    quantiles: np.ndarray  # (5, len(times)), rows follow QUANTILE_LEVELS
    mean: np.ndarray
    curves: np.ndarray  # the simulated curves the band was built from
    n_dropped: int = 0
    observation_noise: bool = False

    def quantile(self, name: str) -> np.ndarray:
        return self.quantiles[QUANTILE_NAMES.index(name)]


def _evenly_spaced(n: int, k: int | None) -> np.ndarray:
    if k is None or k >= n:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, k).round().astype(int))


def simulate_curves(draws: np.ndarray, fs: FixedSettings, times: np.ndarray,
                    grid_step: float = DEFAULT_STEP, max_dropped_frac: float = 0.01):
    """G at ``times`` for every draw; non-finite curves are dropped and counted."""
    times = np.asarray(times, dtype=float)
    curves = np.empty((len(draws), len(times)))
    for k, (th0, th1, th2, g0) in enumerate(draws):
        curves[k] = kernels.forced_glucose(th0, th1, th2, g0, fs.a, fs.b, fs.c, fs.gb, fs.v0,
                                           grid_step, times)
    ok = np.isfinite(curves).all(axis=1)
    n_dropped = int((~ok).sum())
    if n_dropped:
        log.warning("dropped %d of %d posterior curves (non-finite simulation)",
                    n_dropped, len(draws))
    if n_dropped > max_dropped_frac * len(draws):
        raise AnalysisError(f"{n_dropped} of {len(draws)} simulations failed (> "
                            f"{max_dropped_frac:.0%})")
    return curves[ok], n_dropped


def predictive_band(sample: PosteriorSample, fs: FixedSettings, horizon: float = 3.0,
                    grid_step: float = 0.05, max_curves: int | None = 1000, *,
                    observation_noise: bool = False, seed: int = 0,
                    integrator_step: float = DEFAULT_STEP) -> PredictiveBand:
    """Pointwise quantiles of posterior glucose curves on ``[0, horizon]``.

    ``max_curves`` evenly spaced draws are simulated. With
    ``observation_noise`` each curve value gets independent N(0, sigma^2)
    jitter, giving the band for a new reading rather than for the latent G.
    """
    if len(sample) == 0:
        raise AnalysisError("empty posterior sample")
    if not horizon > 0 or not grid_step > 0:
        raise ValueError("horizon and grid_step must be > 0")
    n_pts = int(round(horizon / grid_step)) + 1
    times = np.arange(n_pts) * grid_step
    idx = _evenly_spaced(len(sample), max_curves)
    curves, n_dropped = simulate_curves(sample.draws[idx], fs, times, integrator_step)
    values = curves
    if observation_noise:
        rng = np.random.default_rng(seed)
        values = curves + rng.normal(0.0, fs.sigma, curves.shape)
    q = np.quantile(values, QUANTILE_LEVELS, axis=0, method="linear")
    return PredictiveBand(times=times, quantiles=q, mean=values.mean(axis=0), curves=curves,
                          n_dropped=n_dropped, observation_noise=observation_noise)


@dataclass
class GlucosePrediction:
    """Posterior predictive distribution of a new reading at ``time``."""

    time: float
    threshold: float
    mean: float
    lo: float
    hi: float
    p_above: float
    latent_mean: float
    samples: np.ndarray = field(repr=False)

    def prob_above(self, threshold: float) -> float:
        return float(np.mean(self.samples > threshold))


def predict_glucose(sample: PosteriorSample, fs: FixedSettings, time: float = 3.0,
                    threshold: float = 120.0, seed: int = 0, max_draws: int | None = 20000,
                    integrator_step: float = DEFAULT_STEP) -> GlucosePrediction:
    if len(sample) == 0:
        raise AnalysisError("empty posterior sample")
    idx = _evenly_spaced(len(sample), max_draws)
    curves, _ = simulate_curves(sample.draws[idx], fs, np.array([time]), integrator_step)
    latent = curves[:, 0]
    rng = np.random.default_rng(seed)
    noisy = latent + rng.normal(0.0, fs.sigma, latent.shape)
    lo, hi = np.quantile(noisy, [0.025, 0.975], method="linear")
    return GlucosePrediction(time=time, threshold=threshold, mean=float(noisy.mean()),
                             lo=float(lo), hi=float(hi),
                             p_above=float(np.mean(noisy > threshold)),
                             latent_mean=float(latent.mean()), samples=noisy)


def predict_g3h(sample: PosteriorSample, fs: FixedSettings, threshold: float = 120.0,
                seed: int = 0, **kw) -> GlucosePrediction:
    """Predicted reading at 3 h, with P[G(3h) > threshold]."""
    return predict_glucose(sample, fs, 3.0, threshold, seed, **kw)


@dataclass(frozen=True)
class ParamSummary:
    mean: float
    sd: float
    median: float
    lo: float
    hi: float


@dataclass
class FitSummary:
    params: dict[str, ParamSummary]
    theta0_flag: str
    cutoffs: tuple[float, float]
    g_3h: GlucosePrediction | None = None
    acceptance_rate: float | None = None
    n_draws: int = 0

    def to_text(self) -> str:
        lines = [f"posterior draws: {self.n_draws}"]
        if self.acceptance_rate is not None:
            lines.append(f"t-walk acceptance rate: {self.acceptance_rate:.3f}")
        lines.append("")
        lines.append(f"{'parameter':10s} {'mean':>10s} {'sd':>10s} {'median':>10s} "
                     f"{'2.5%':>10s} {'97.5%':>10s}")
        for name, s in self.params.items():
            lines.append(f"{name:10s} {s.mean:10.4g} {s.sd:10.4g} {s.median:10.4g} "
                         f"{s.lo:10.4g} {s.hi:10.4g}")
        lo, hi = self.cutoffs
        lines.append("")
        lines.append(f"theta0 flag: {self.theta0_flag} (posterior median vs cutoffs "
                     f"low < {lo:g}, high > {hi:g}; cutoffs are package defaults, not "
                     f"clinical or published values)")
        if self.g_3h is not None:
            g = self.g_3h
            lines.append(f"predicted G(3h): mean {g.mean:.1f} mg/dL, 95% interval "
                         f"[{g.lo:.1f}, {g.hi:.1f}] mg/dL")
            lines.append(f"P[G(3h) > {g.threshold:g} mg/dL] = {g.p_above:.3f}")
        return "\n".join(lines) + "\n"


def theta0_flag(median: float, cutoffs: tuple[float, float] = (THETA0_LOW, THETA0_HIGH)) -> str:
    lo, hi = cutoffs
    if median < lo:
        return "low"
    if median > hi:
        return "high"
    return "normal"


def summarize(sample: PosteriorSample,
              cutoffs: tuple[float, float] = (THETA0_LOW, THETA0_HIGH),
              g_3h: GlucosePrediction | None = None) -> FitSummary:
    if len(sample) == 0:
        raise AnalysisError("empty posterior sample")
    if not cutoffs[0] < cutoffs[1]:
        raise ValueError("need low cutoff < high cutoff")
    params = {}
    for j, name in enumerate(sample.names):
        col = sample.draws[:, j]
        lo, med, hi = np.quantile(col, [0.025, 0.5, 0.975], method="linear")
        params[name] = ParamSummary(float(col.mean()), float(col.std()), float(med),
                                    float(lo), float(hi))
    flag = theta0_flag(params["theta0"].median, cutoffs)
    return FitSummary(params=params, theta0_flag=flag, cutoffs=tuple(cutoffs), g_3h=g_3h,
                      acceptance_rate=sample.acceptance_rate, n_draws=len(sample))
