"""Glucose-insulin-glucagon minimal model for oral glucose tolerance tests.

State variables (all in mg/dL, time in hours):

    G  blood glucose
    I  insulin action, enters dG/dt directly as a rate
    L  glucagon action, enters dG/dt directly as a rate
    D  glucose in the digestive system
    V  glucose still in the drink

    dG/dt = L - I + D / theta2
    dI/dt = theta0 (G - Gb)^+ - I / a
    dL/dt = theta1 (Gb - G)^+ - L / b
    dD/dt = -D / theta2 + 2 V / c
    dV/dt = -2 V / c

D and V decouple from the rest and have a closed form, so the production path
integrates only (G, I, L) forced by D(t). The five-equation path is kept as an
independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ._backend import kernels

DEFAULT_STEP = 0.005  # hr


class SimulationError(RuntimeError):
    """Integration produced a non-finite state."""

    def __init__(self, time: float, message: str | None = None):
        self.time = time
        super().__init__(message or f"non-finite state at t = {time:g} hr")


@dataclass(frozen=True)
class FixedSettings:
    """Constants that are not inferred.

    ``a``, ``b`` and ``c`` are mean lives in hours. ``gb`` (fasting threshold)
    and ``v0`` (glucose load expressed in blood concentration units) are
    conventions of this package, not published values.
    """

    a: float = 0.6
    b: float = 0.6
    c: float = 5.0 / 60.0
    gb: float = 100.0
    v0: float = 660.0
    sigma: float = 5.0

    def __post_init__(self):
        for name in ("a", "b", "c", "gb"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        # v0 = 0 gives the homeostasis fixed point; sigma = 0 generates noiseless
        # data and sigma = inf switches the likelihood off.
        if not (math.isfinite(self.v0) and self.v0 >= 0):
            raise ValueError(f"v0 must be finite and >= 0, got {self.v0!r}")
        if not (self.sigma >= 0):
            raise ValueError(f"sigma must be >= 0, got {self.sigma!r}")


@dataclass(frozen=True)
class PatientParams:
    """The inferred quantities: sensitivities, digestive mean life, G(0)."""

    theta0: float
    theta1: float
    theta2: float
    g0: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, x: Sequence[float]) -> "PatientParams":
        return cls(*(float(v) for v in x))

    def check(self, fs: FixedSettings, theta2_bounds: tuple[float, float] = (1.0 / 6.0, 2.0)):
        """Raise ValueError if the parameters are outside their support."""
        lo, hi = theta2_bounds
        if not self.theta0 > 0:
            raise ValueError(f"theta0 must be > 0, got {self.theta0}")
        if not self.theta1 > 0:
            raise ValueError(f"theta1 must be > 0, got {self.theta1}")
        if not lo <= self.theta2 <= hi:
            raise ValueError(f"theta2 must lie in [{lo:.6g}, {hi:.6g}], got {self.theta2}")
        if not self.theta2 > fs.c / 2:
            raise ValueError(f"theta2 must exceed c/2 = {fs.c / 2:.6g}, got {self.theta2}")
        if not self.g0 > 0:
            raise ValueError(f"g0 must be > 0, got {self.g0}")


class State(NamedTuple):
    g: float
    i: float
    l: float  # noqa: E741
    d: float
    v: float


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), 5): G, I, L, D, V

    def __len__(self):
        return len(self.times)

    def __getitem__(self, k: int) -> State:
        return State(*(float(v) for v in self.states[k]))

    @property
    def g(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def i(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def l(self) -> np.ndarray:  # noqa: E743
        return self.states[:, 2]

    @property
    def d(self) -> np.ndarray:
        return self.states[:, 3]

    @property
    def v(self) -> np.ndarray:
        return self.states[:, 4]


def rhs(s: State, p: PatientParams, fs: FixedSettings) -> State:
    """Time derivatives (per hour) of the five state variables."""
    g, i, l, d, v = s  # noqa: E741
    return State(
        g=l - i + d / p.theta2,
        i=p.theta0 * max(g - fs.gb, 0.0) - i / fs.a,
        l=p.theta1 * max(fs.gb - g, 0.0) - l / fs.b,
        d=-d / p.theta2 + 2.0 * v / fs.c,
        v=-2.0 * v / fs.c,
    )


def analytic_dv(t: float | np.ndarray, p: PatientParams, fs: FixedSettings):
    """Closed-form digestive and drink compartments (D(t), V(t)).

    Valid only for theta2 > c/2; at theta2 = c/2 the two decay rates coincide
    and for smaller theta2 D would start out negative.
    """
    if not p.theta2 > fs.c / 2:
        raise ValueError(f"closed form requires theta2 > c/2 = {fs.c / 2:.6g}, got {p.theta2}")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    scale = fs.v0 / (fs.c / (2.0 * p.theta2) - 1.0)
    d = scale * (np.exp(-2.0 * t / fs.c) - np.exp(-t / p.theta2))
    v = fs.v0 * np.exp(-2.0 * t / fs.c)
    if d.ndim == 0:
        return float(d), float(v)
    return d, v


def _kernel_args(p: PatientParams, fs: FixedSettings):
    return (p.theta0, p.theta1, p.theta2, p.g0, fs.a, fs.b, fs.c, fs.gb, fs.v0)


def simulate(
    p: PatientParams,
    fs: FixedSettings,
    t_end: float = 3.0,
    grid_step: float = DEFAULT_STEP,
    method: str = "forced",
) -> Trajectory:
    """Integrate the model from (g0, 0, 0, 0, v0) with fixed-step RK4.

    ``method="forced"`` integrates (G, I, L) with the closed-form D(t) as
    forcing; ``method="full"`` integrates all five equations. The grid is
    ``k * grid_step`` for ``k = 0..round(t_end / grid_step)``.
    """
    if not t_end > 0:
        raise ValueError("t_end must be > 0")
    if not grid_step > 0:
        raise ValueError("grid_step must be > 0")
    if not p.theta2 > fs.c / 2:
        raise ValueError(f"theta2 must exceed c/2 = {fs.c / 2:.6g}")
    n_steps = int(math.ceil(t_end / grid_step - 1e-9))
    args = _kernel_args(p, fs)
    if method == "forced":
        states = kernels.forced_states(*args, grid_step, n_steps)
    elif method == "full":
        states = kernels.full_states(*args, grid_step, n_steps)
    else:
        raise ValueError(f"unknown method {method!r}")
    times = np.arange(n_steps + 1) * grid_step
    bad = ~np.isfinite(states).all(axis=1)
    if bad.any():
        raise SimulationError(float(times[np.argmax(bad)]))
    return Trajectory(times=times, states=states)


def glucose_at(
    p: PatientParams,
    fs: FixedSettings,
    times: Sequence[float],
    grid_step: float = DEFAULT_STEP,
) -> np.ndarray:
    """G(t) at arbitrary sorted times.

    Times between grid points are reached with a single RK4 step of the
    remaining length from the preceding grid point, so the result carries
    the integrator's own accuracy rather than an interpolation error.
    """
    t = np.asarray(times, dtype=float)
    if t.ndim != 1:
        raise ValueError("times must be one-dimensional")
    if t.size and (t[0] < 0 or np.any(np.diff(t) < 0)):
        raise ValueError("times must be sorted and >= 0")
    if not p.theta2 > fs.c / 2:
        raise ValueError(f"theta2 must exceed c/2 = {fs.c / 2:.6g}")
    g = kernels.forced_glucose(*_kernel_args(p, fs), grid_step, t)
    bad = ~np.isfinite(g)
    if bad.any():
        raise SimulationError(float(t[np.argmax(bad)]))
    return g
