"""Log-posterior for OGTT data.

Observation model: d_i = G(t_i) + e_i with e_i ~ N(0, sigma^2) independent.
Priors: theta0, theta1 ~ Gamma(shape, rate); theta2 ~ Gamma(shape, rate)
truncated to [lo, hi]; g0 ~ Normal(center, sd) truncated to (0, inf).

All prior log-densities are fully normalized (log Gamma(shape), truncation
mass), so values are comparable across specs and usable for calibration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import special

from ._backend import kernels
from .model import DEFAULT_STEP, FixedSettings, PatientParams, SimulationError, glucose_at

log = logging.getLogger(__name__)

PARAM_NAMES = ("theta0", "theta1", "theta2", "g0")


@dataclass(frozen=True)
class ObservationSet:
    """OGTT readings; times in hours, glucose in mg/dL."""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "values", tuple(float(d) for d in self.values))
        if len(self.times) != len(self.values):
            raise ValueError("times and values differ in length")
        if len(self.times) < 2:
            raise ValueError(f"need n >= 2 observations, got {len(self.times)}")
        if not all(math.isfinite(t) for t in self.times + self.values):
            raise ValueError("observations must be finite")
        if self.times[0] < 0:
            raise ValueError("observation times must be >= 0")
        if any(t1 <= t0 for t0, t1 in zip(self.times, self.times[1:])):
            raise ValueError("observation times must be strictly increasing")
        if any(d <= 0 for d in self.values):
            raise ValueError("glucose readings must be > 0")

    @classmethod
    def from_records(cls, records: Sequence[tuple[float, float]]) -> "ObservationSet":
        return cls(tuple(t for t, _ in records), tuple(d for _, d in records))

    def __len__(self):
        return len(self.times)

    @property
    def records(self) -> list[tuple[float, float]]:
        return list(zip(self.times, self.values))


@dataclass(frozen=True)
class PriorSpec:
    """Prior hyperparameters. ``g0_center=None`` means "use the first reading"."""

    theta0_shape: float = 2.0
    theta0_rate: float = 0.25
    theta1_shape: float = 2.0
    theta1_rate: float = 0.25
    theta2_shape: float = 10.0
    theta2_rate: float = 20.0
    theta2_lo: float = 1.0 / 6.0
    theta2_hi: float = 2.0
    g0_center: float | None = None
    g0_sd: float = 10.0

    def __post_init__(self):
        for name in ("theta0_shape", "theta0_rate", "theta1_shape", "theta1_rate",
                     "theta2_shape", "theta2_rate", "g0_sd"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")
        if not 0 <= self.theta2_lo < self.theta2_hi:
            raise ValueError("need 0 <= theta2_lo < theta2_hi")
        if self.g0_center is not None and not math.isfinite(self.g0_center):
            raise ValueError("g0_center must be finite")

    def resolved(self, obs: ObservationSet) -> "PriorSpec":
        """Fill in the data-anchored g0 center."""
        if self.g0_center is not None:
            return self
        return replace(self, g0_center=obs.values[0])

    def _center(self) -> float:
        if self.g0_center is None:
            raise ValueError("g0_center unresolved; call PriorSpec.resolved(obs) first")
        return self.g0_center

    def theta2_mass(self) -> float:
        """Gamma probability mass inside [theta2_lo, theta2_hi]."""
        return float(special.gammainc(self.theta2_shape, self.theta2_rate * self.theta2_hi)
                     - special.gammainc(self.theta2_shape, self.theta2_rate * self.theta2_lo))

    def constants(self) -> tuple[float, ...]:
        """Flat tuple consumed by the compiled target."""
        def gamma_norm(shape, rate):
            return shape * math.log(rate) - math.lgamma(shape)

        m = self._center()
        k_g = (-math.log(self.g0_sd) - 0.5 * math.log(2 * math.pi)
               - float(special.log_ndtr(m / self.g0_sd)))
        return (
            self.theta0_shape, self.theta0_rate, gamma_norm(self.theta0_shape, self.theta0_rate),
            self.theta1_shape, self.theta1_rate, gamma_norm(self.theta1_shape, self.theta1_rate),
            self.theta2_shape, self.theta2_rate,
            gamma_norm(self.theta2_shape, self.theta2_rate) - math.log(self.theta2_mass()),
            self.theta2_lo, self.theta2_hi,
            m, self.g0_sd, k_g,
        )


def _gamma_logpdf(x, shape, rate):
    return shape * math.log(rate) - math.lgamma(shape) + (shape - 1) * math.log(x) - rate * x


def in_support(p: PatientParams, spec: PriorSpec, fs: FixedSettings | None = None) -> bool:
    ok = (p.theta0 > 0 and p.theta1 > 0 and spec.theta2_lo <= p.theta2 <= spec.theta2_hi
          and p.g0 > 0)
    if fs is not None:
        ok = ok and p.theta2 > fs.c / 2
    return bool(ok)


def log_prior(p: PatientParams, spec: PriorSpec) -> float:
    """Sum of normalized prior log-densities; -inf outside the support."""
    if not in_support(p, spec):
        return -math.inf
    m = spec._center()
    lp = _gamma_logpdf(p.theta0, spec.theta0_shape, spec.theta0_rate)
    lp += _gamma_logpdf(p.theta1, spec.theta1_shape, spec.theta1_rate)
    lp += _gamma_logpdf(p.theta2, spec.theta2_shape, spec.theta2_rate) - math.log(spec.theta2_mass())
    z = (p.g0 - m) / spec.g0_sd
    lp += (-0.5 * z * z - math.log(spec.g0_sd) - 0.5 * math.log(2 * math.pi)
           - float(special.log_ndtr(m / spec.g0_sd)))
    return lp


def _likelihood_constants(sigma: float, n: int) -> tuple[float, float]:
    """(1 / (2 sigma^2), -(n/2) log(2 pi sigma^2)); sigma = inf disables the likelihood."""
    if sigma == math.inf:
        return 0.0, 0.0
    if not sigma > 0:
        raise ValueError("the likelihood needs sigma > 0")
    return 1.0 / (2.0 * sigma * sigma), -0.5 * n * math.log(2 * math.pi * sigma * sigma)


def log_likelihood(p: PatientParams, fs: FixedSettings, obs: ObservationSet,
                   grid_step: float = DEFAULT_STEP) -> float:
    """Gaussian log-likelihood of the readings, including its normalizing constant."""
    inv2s2, const = _likelihood_constants(fs.sigma, len(obs))
    try:
        g = glucose_at(p, fs, obs.times, grid_step)
    except SimulationError as exc:
        log.warning("likelihood set to -inf: %s (params %s)", exc, p)
        return -math.inf
    resid = np.asarray(obs.values) - g
    return const - float(resid @ resid) * inv2s2


def log_posterior(p: PatientParams, fs: FixedSettings, obs: ObservationSet, spec: PriorSpec,
                  grid_step: float = DEFAULT_STEP) -> float:
    spec = spec.resolved(obs)
    if not in_support(p, spec, fs):
        return -math.inf
    return log_prior(p, spec) + log_likelihood(p, fs, obs, grid_step)


def make_target(obs: ObservationSet, fs: FixedSettings, spec: PriorSpec,
                grid_step: float = DEFAULT_STEP, *, _likelihood_sign: float = 1.0):
    """Fused log-posterior callable on (theta0, theta1, theta2, g0) arrays.

    Evaluates the same density as :func:`log_posterior` inside the selected
    kernel backend. ``_likelihood_sign=-1`` flips the quadratic term and exists
    only as a negative control for calibration tests.
    """
    return make_target_arrays(obs.times, obs.values, fs, spec.resolved(obs), grid_step,
                              _likelihood_sign=_likelihood_sign)


def make_target_arrays(times, values, fs: FixedSettings, spec: PriorSpec,
                       grid_step: float = DEFAULT_STEP, *, _likelihood_sign: float = 1.0):
    """Like :func:`make_target` but without ObservationSet validation.

    Calibration runs draw from the exact generative model, where readings may
    be non-positive; they use this entry point. ``spec`` must be resolved.
    """
    inv2s2, const = _likelihood_constants(fs.sigma, len(times))
    return kernels.OGTTTarget(
        list(times), list(values), (fs.a, fs.b, fs.c, fs.gb, fs.v0), spec.constants(),
        grid_step, inv2s2, const, _likelihood_sign,
    )


def sample_prior(spec: PriorSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` parameter vectors (columns theta0, theta1, theta2, g0) from the prior.

    The truncated components use inverse-CDF sampling restricted to the
    support, so every draw lies inside it.
    """
    m = spec._center()
    out = np.empty((size, 4))
    out[:, 0] = rng.gamma(spec.theta0_shape, 1.0 / spec.theta0_rate, size)
    out[:, 1] = rng.gamma(spec.theta1_shape, 1.0 / spec.theta1_rate, size)
    f_lo = special.gammainc(spec.theta2_shape, spec.theta2_rate * spec.theta2_lo)
    f_hi = special.gammainc(spec.theta2_shape, spec.theta2_rate * spec.theta2_hi)
    u = rng.uniform(f_lo, f_hi, size)
    th2 = special.gammaincinv(spec.theta2_shape, u) / spec.theta2_rate
    out[:, 2] = np.clip(th2, spec.theta2_lo, spec.theta2_hi)
    # truncated normal on (0, inf)
    p_lo = special.ndtr(-m / spec.g0_sd)
    u = rng.uniform(p_lo, 1.0, size)
    g0 = m + spec.g0_sd * special.ndtri(u)
    out[:, 3] = np.maximum(g0, np.nextafter(0.0, 1.0))
    return out


def prior_moments(spec: PriorSpec) -> dict[str, tuple[float, float]]:
    """Exact prior (mean, sd) per parameter, by quadrature for the truncated ones."""
    from scipy import integrate, stats

    def trunc_gamma_moment(k):
        dist = stats.gamma(spec.theta2_shape, scale=1.0 / spec.theta2_rate)
        val, _ = integrate.quad(lambda x: x ** k * dist.pdf(x), spec.theta2_lo, spec.theta2_hi)
        return val / spec.theta2_mass()

    m2 = trunc_gamma_moment(1)
    tn = stats.truncnorm(-spec._center() / spec.g0_sd, np.inf, loc=spec._center(), scale=spec.g0_sd)
    return {
        "theta0": (spec.theta0_shape / spec.theta0_rate, math.sqrt(spec.theta0_shape) / spec.theta0_rate),
        "theta1": (spec.theta1_shape / spec.theta1_rate, math.sqrt(spec.theta1_shape) / spec.theta1_rate),
        "theta2": (m2, math.sqrt(trunc_gamma_moment(2) - m2 * m2)),
        "g0": (float(tn.mean()), float(tn.std())),
    }
