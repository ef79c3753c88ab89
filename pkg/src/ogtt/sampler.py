"""Self-adjusting MCMC (the t-walk) and chain diagnostics.

The t-walk runs two coupled points in the parameter space and alternates
between four proposals: walk, traverse, blow and hop. The move probabilities
(0.4918, 0.4918, 0.0082, 0.0082) and scale constants (walk 1.5, traverse 6,
up to 4 coordinates moved per step) are fixed; there is nothing to tune.

Random numbers come from numpy's PCG64 bit generator, consumed one
``next_double`` at a time; normals are produced by Box-Muller from two such
uniforms. Given a seed, the compiled and pure-Python kernels produce the same
chain bit for bit.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._backend import kernels
from .inference import PARAM_NAMES, PriorSpec, sample_prior

log = logging.getLogger(__name__)

MOVE_NAMES = ("traverse", "walk", "blow", "hop")
STAGNATION_WINDOW = 1000
STAGNATION_RATE = 0.01


class SamplerError(RuntimeError):
    pass


class StagnationWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    n_iterations: int = 200_000
    burn_in: int = 20_000
    thin: int = 1
    seed: int = 0
    init_points: tuple[Sequence[float], Sequence[float]] | None = None

    def __post_init__(self):
        if not self.n_iterations > self.burn_in >= 0:
            raise ValueError("need n_iterations > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.init_points is not None:
            x0, xp0 = (np.asarray(v, dtype=float) for v in self.init_points)
            if x0.shape != xp0.shape or np.array_equal(x0, xp0):
                raise ValueError("init_points must be two distinct vectors of equal length")


@dataclass
class PosteriorSample:
    """Kept draws (after burn-in and thinning) with their log-posterior values."""

    draws: np.ndarray
    logpost: np.ndarray
    acceptance_rate: float
    iat: np.ndarray
    names: tuple[str, ...] = PARAM_NAMES
    seed: int | None = None
    move_acceptance: dict[str, float] = field(default_factory=dict)

    def __len__(self):
        return len(self.draws)

    @property
    def n_kept(self) -> int:
        return len(self.draws)

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.names.index(name)]

    def thinned(self, step: int | None = None) -> "PosteriorSample":
        """Every ``step``-th draw; by default step = ceil(max IAT)."""
        if step is None:
            finite = self.iat[np.isfinite(self.iat)]
            step = int(math.ceil(finite.max())) if finite.size else 1
        step = max(1, step)
        return PosteriorSample(self.draws[::step], self.logpost[::step], self.acceptance_rate,
                               self.iat, self.names, self.seed, dict(self.move_acceptance))


def integrated_autocorr_time(x: np.ndarray) -> float:
    """Integrated autocorrelation time by Geyer's initial monotone sequence.

    Returns ``inf`` for a chain with zero variance (no information about
    mixing). The estimate is floored at 1.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4:
        raise ValueError(f"need at least 4 draws, got {n}")
    xc = x - x.mean()
    var = float(xc @ xc) / n
    if not (var > 0 and math.isfinite(var)):
        return math.inf
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    rho = acov / acov[0]
    m = n // 2
    pairs = rho[0:2 * m:2] + rho[1:2 * m:2]
    nonpos = np.flatnonzero(pairs <= 0)
    k = nonpos[0] if nonpos.size else m
    pairs = np.minimum.accumulate(pairs[:k])
    tau = -1.0 + 2.0 * float(pairs.sum())
    return max(tau, 1.0)


@dataclass(frozen=True)
class Diagnostics:
    acceptance_rate: float
    iat: np.ndarray
    ess: np.ndarray

    def __str__(self):
        rows = [f"acceptance rate {self.acceptance_rate:.3f}"]
        for name, t, e in zip(PARAM_NAMES, self.iat, self.ess):
            rows.append(f"  {name:7s} IAT {t:10.2f}  ESS {e:10.1f}")
        return "\n".join(rows)


def diagnostics(sample: PosteriorSample, min_draws: int = 100) -> Diagnostics:
    if sample.n_kept < min_draws:
        raise ValueError(f"diagnostics need at least {min_draws} draws, got {sample.n_kept}")
    iat = np.array([integrated_autocorr_time(c) for c in sample.draws.T])
    ess = sample.n_kept / iat
    return Diagnostics(sample.acceptance_rate, iat, ess)


def run(target: Callable[[np.ndarray], float], cfg: SamplerConfig) -> PosteriorSample:
    """Sample ``target`` (a log-density, -inf outside its support) with the t-walk."""
    if cfg.init_points is None:
        raise SamplerError("SamplerConfig.init_points is required (see init_points_from_prior)")
    x0, xp0 = (np.asarray(v, dtype=float) for v in cfg.init_points)
    for pt in (x0, xp0):
        if not math.isfinite(target(pt)):
            raise SamplerError(f"initial point {pt.tolist()} has non-finite log-density")

    bitgen = np.random.PCG64(cfg.seed)
    chain, logp, accepted, moves = kernels.twalk(target, x0, xp0, cfg.n_iterations, bitgen)

    post = accepted[cfg.burn_in:]
    if len(post) >= STAGNATION_WINDOW:
        n_win = len(post) // STAGNATION_WINDOW
        rates = post[:n_win * STAGNATION_WINDOW].reshape(n_win, -1).mean(axis=1)
        if rates.min() < STAGNATION_RATE:
            warnings.warn(
                f"t-walk acceptance fell below {STAGNATION_RATE:.0%} in a "
                f"{STAGNATION_WINDOW}-iteration window (min {rates.min():.4f})",
                StagnationWarning, stacklevel=2)

    move_acc = {}
    for code, name in enumerate(MOVE_NAMES):
        sel = moves == code
        move_acc[name] = float(accepted[sel].mean()) if sel.any() else float("nan")

    keep = slice(cfg.burn_in + 1, None, cfg.thin)
    draws = chain[keep]
    lp = logp[keep]
    iat = (np.array([integrated_autocorr_time(c) for c in draws.T])
           if len(draws) >= 4 else np.full(draws.shape[1], np.nan))
    names = PARAM_NAMES if draws.shape[1] == len(PARAM_NAMES) else tuple(
        f"x{j}" for j in range(draws.shape[1]))
    return PosteriorSample(draws=draws, logpost=lp, acceptance_rate=float(accepted.mean()),
                           iat=iat, names=names, seed=cfg.seed, move_acceptance=move_acc)


def init_points_from_prior(spec: PriorSpec, seed: int,
                           target: Callable[[np.ndarray], float] | None = None,
                           max_tries: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """Two distinct prior draws with finite target density.

    ``spec`` must have a resolved g0 center. Raises SamplerError when no
    acceptable pair turns up within ``max_tries`` draws.
    """
    rng = np.random.Generator(np.random.PCG64([seed, 1]))
    found: list[np.ndarray] = []
    batch = 16
    tries = 0
    while tries < max_tries:
        for x in sample_prior(spec, rng, batch):
            tries += 1
            if target is not None and not math.isfinite(target(x)):
                continue
            if found and np.array_equal(found[0], x):
                continue
            found.append(x)
            if len(found) == 2:
                return found[0], found[1]
            if tries >= max_tries:
                break
    raise SamplerError(f"no pair of finite-density initial points in {max_tries} prior draws; "
                       "check that the data and model settings are compatible")
