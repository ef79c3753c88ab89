"""File formats: observation CSV, output files, run configuration.

Every file the package writes can be read back by this module. Floats are
written with ``repr`` so a write/read cycle is exact.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .analysis import QUANTILE_NAMES, THETA0_HIGH, THETA0_LOW, FitSummary, PredictiveBand
from .inference import PARAM_NAMES, ObservationSet, PriorSpec
from .model import DEFAULT_STEP, FixedSettings
from .sampler import PosteriorSample, SamplerConfig

OBS_HEADER = "time_hr,glucose_mg_dl"
POSTERIOR_HEADER = "theta0,theta1,theta2,g0,log_post"
BAND_HEADER = "time_hr,mean," + ",".join(QUANTILE_NAMES)
OUT_DIR_ENV = "OGTT_OUT_DIR"


class ObservationFileError(ValueError):
    """Problem with an observation file; ``line`` is 1-based (header = line 1)."""

    def __init__(self, path, line: int | None, message: str):
        self.path = str(path)
        self.line = line
        where = f"{self.path}, line {line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class MissingFileError(ObservationFileError, FileNotFoundError):
    pass


class MalformedHeaderError(ObservationFileError):
    pass


class NonNumericCellError(ObservationFileError):
    pass


class NonIncreasingTimesError(ObservationFileError):
    pass


class TooFewObservationsError(ObservationFileError):
    pass


class InvalidReadingError(ObservationFileError):
    pass


def _fmt(v: float) -> str:
    return repr(float(v))


def read_observations(path) -> ObservationSet:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(path, None, "file not found")
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != OBS_HEADER:
        got = lines[0].strip() if lines else "<empty file>"
        raise MalformedHeaderError(path, 1, f"expected header {OBS_HEADER!r}, got {got!r}")
    times: list[float] = []
    values: list[float] = []
    last_line = 1
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        cells = [c.strip() for c in raw.split(",")]
        if len(cells) != 2:
            raise InvalidReadingError(path, lineno, f"expected 2 cells, got {len(cells)}")
        nums = []
        for cell in cells:
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise NonNumericCellError(path, lineno, f"non-numeric cell {cell!r}")
            nums.append(v)
        t, d = nums
        if t < 0:
            raise InvalidReadingError(path, lineno, f"negative time {t!r}")
        if d <= 0:
            raise InvalidReadingError(path, lineno, f"glucose must be > 0, got {d!r}")
        if times and t <= times[-1]:
            raise NonIncreasingTimesError(
                path, lineno, f"time {t!r} does not increase over previous {times[-1]!r}")
        times.append(t)
        values.append(d)
        last_line = lineno
    if len(times) < 2:
        raise TooFewObservationsError(path, last_line,
                                      f"need n >= 2 observations, found {len(times)}")
    return ObservationSet(tuple(times), tuple(values))


def write_observations(obs: ObservationSet, path) -> Path:
    path = Path(path)
    rows = [OBS_HEADER] + [f"{_fmt(t)},{_fmt(d)}" for t, d in obs.records]
    path.write_text("\n".join(rows) + "\n")
    return path


def _write(path: Path, text: str):
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_posterior(sample: PosteriorSample, path) -> Path:
    path = Path(path)
    rows = [POSTERIOR_HEADER]
    for draw, lp in zip(sample.draws.tolist(), sample.logpost.tolist()):
        rows.append(",".join(_fmt(v) for v in draw) + "," + _fmt(lp))
    _write(path, "\n".join(rows) + "\n")
    return path


def read_posterior(path) -> tuple[np.ndarray, np.ndarray]:
    """(draws, log_post) from a posterior.csv."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != POSTERIOR_HEADER:
        raise ValueError(f"{path}: expected header {POSTERIOR_HEADER!r}")
    data = np.array([[float(c) for c in ln.split(",")] for ln in lines[1:] if ln],
                    dtype=float).reshape(-1, 5)
    return data[:, :4], data[:, 4]


def write_band(band: PredictiveBand, path) -> Path:
    path = Path(path)
    rows = [BAND_HEADER]
    for k, t in enumerate(band.times.tolist()):
        vals = [t, band.mean[k]] + [band.quantiles[q, k] for q in range(len(QUANTILE_NAMES))]
        rows.append(",".join(_fmt(v) for v in vals))
    _write(path, "\n".join(rows) + "\n")
    return path


def read_band(path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != BAND_HEADER:
        raise ValueError(f"{path}: expected header {BAND_HEADER!r}")
    cols = BAND_HEADER.split(",")
    data = np.array([[float(c) for c in ln.split(",")] for ln in lines[1:] if ln],
                    dtype=float).reshape(-1, len(cols))
    return {name: data[:, j] for j, name in enumerate(cols)}


def band_svg(band: PredictiveBand, obs: ObservationSet | None = None, max_curves: int = 60,
             width: int = 720, height: int = 420) -> str:
    """Data points over posterior glucose curves and the q05-q95 / q25-q75 bands."""
    ml, mr, mt, mb = 60, 20, 20, 45
    pw, ph = width - ml - mr, height - mt - mb
    t = band.times
    ys = [band.quantiles.ravel()]
    if len(band.curves):
        ys.append(band.curves.ravel())
    if obs is not None:
        ys.append(np.asarray(obs.values))
    allv = np.concatenate(ys)
    ymin, ymax = float(allv.min()), float(allv.max())
    pad = 0.05 * (ymax - ymin or 1.0)
    ymin, ymax = ymin - pad, ymax + pad
    xmax = float(t[-1])

    def sx(v):
        return ml + pw * float(v) / xmax

    def sy(v):
        return mt + ph * (1.0 - (float(v) - ymin) / (ymax - ymin))

    def polyline(xs, vs):
        return " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xs, vs))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']
    q = {name: band.quantiles[k] for k, name in enumerate(QUANTILE_NAMES)}
    for lo, hi, colour in (("q05", "q95", "#c6dbef"), ("q25", "q75", "#6baed6")):
        pts = polyline(t, q[hi]) + " " + polyline(t[::-1], q[lo][::-1])
        out.append(f'<polygon class="band-{lo}-{hi}" points="{pts}" fill="{colour}" '
                   f'fill-opacity="0.6" stroke="none"/>')
    if len(band.curves):
        idx = np.unique(np.linspace(0, len(band.curves) - 1,
                                    min(max_curves, len(band.curves))).round().astype(int))
        for k in idx:
            out.append(f'<polyline class="curve" points="{polyline(t, band.curves[k])}" '
                       f'fill="none" stroke="#808080" stroke-opacity="0.35" stroke-width="0.8"/>')
    out.append(f'<polyline class="median" points="{polyline(t, q["q50"])}" fill="none" '
               f'stroke="#08306b" stroke-width="2"/>')
    if obs is not None:
        for tt, d in obs.records:
            if tt <= xmax:
                out.append(f'<circle class="obs" cx="{sx(tt):.2f}" cy="{sy(d):.2f}" r="4" '
                           f'fill="red"/>')
    # axes
    x0, y0 = ml, mt + ph
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{ml + pw}" y2="{y0}" stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{mt}" x2="{x0}" y2="{y0}" stroke="black"/>')
    for tick in np.arange(0.0, xmax + 1e-9, 0.5):
        out.append(f'<text x="{sx(tick):.2f}" y="{y0 + 16}" font-size="11" '
                   f'text-anchor="middle">{tick:g}</text>')
    for tick in np.linspace(ymin, ymax, 6):
        out.append(f'<text x="{ml - 6}" y="{sy(tick) + 4:.2f}" font-size="11" '
                   f'text-anchor="end">{tick:.0f}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 8}" font-size="12" '
               f'text-anchor="middle">time (hr)</text>')
    out.append(f'<text x="14" y="{mt + ph / 2}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 14 {mt + ph / 2})">glucose (mg/dL)</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_outputs(sample: PosteriorSample, band: PredictiveBand, summary: FitSummary,
                  out_dir, obs: ObservationSet | None = None,
                  extra_summary: str = "") -> dict[str, Path]:
    """Write posterior.csv, band.csv, summary.txt and band.svg into ``out_dir``."""
    if len(sample) == 0:
        raise ValueError("refusing to write outputs for an empty posterior sample")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc.strerror or exc}") from exc
    paths = {
        "posterior": write_posterior(sample, out_dir / "posterior.csv"),
        "band": write_band(band, out_dir / "band.csv"),
    }
    paths["summary"] = out_dir / "summary.txt"
    _write(paths["summary"], extra_summary + summary.to_text())
    paths["svg"] = out_dir / "band.svg"
    _write(paths["svg"], band_svg(band, obs))
    return paths


class ConfigError(ValueError):
    pass


_FIXED_KEYS = {f.name for f in fields(FixedSettings)}
_PRIOR_KEYS = {f.name for f in fields(PriorSpec)}
_INT_KEYS = {"iterations", "burn_in", "thin", "seed", "max_curves"}
_FLOAT_KEYS = {"horizon", "band_step", "integrator_step", "threshold", "theta0_low",
               "theta0_high"}
_STR_KEYS = {"out"}
CONFIG_KEYS = frozenset(_FIXED_KEYS | _PRIOR_KEYS | _INT_KEYS | _FLOAT_KEYS | _STR_KEYS)


@dataclass
class RunConfig:
    fixed: FixedSettings = field(default_factory=FixedSettings)
    prior: PriorSpec = field(default_factory=PriorSpec)
    iterations: int = 200_000
    burn_in: int = 20_000
    thin: int = 1
    seed: int = 0
    out: str | None = None
    horizon: float = 3.0
    band_step: float = 0.05
    integrator_step: float = DEFAULT_STEP
    threshold: float = 120.0
    max_curves: int = 1000
    theta0_low: float = THETA0_LOW
    theta0_high: float = THETA0_HIGH

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(n_iterations=self.iterations, burn_in=self.burn_in,
                             thin=self.thin, seed=self.seed)

    def validate(self):
        try:
            self.sampler_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for name in ("horizon", "band_step", "integrator_step"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.max_curves < 1:
            raise ConfigError("max_curves must be >= 1")
        if not self.theta0_low < self.theta0_high:
            raise ConfigError("theta0_low must be < theta0_high")
        return self

    def output_dir(self, cli_out: str | None = None) -> Path:
        """--out flag, then $OGTT_OUT_DIR, then the config file, then ./ogtt-out."""
        return Path(cli_out or os.environ.get(OUT_DIR_ENV) or self.out or "ogtt-out")


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    fixed, prior, other = {}, {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}, line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}, line {lineno}: unknown key {key!r}")
        try:
            if key in _STR_KEYS:
                parsed = value
            elif key in _INT_KEYS:
                parsed = int(value)
            elif key == "g0_center" and value.lower() in ("auto", "none"):
                parsed = None
            else:
                parsed = float(value)
        except ValueError:
            raise ConfigError(f"{source}, line {lineno}: bad value {value!r} for {key}") from None
        if key in _FIXED_KEYS:
            fixed[key] = parsed
        elif key in _PRIOR_KEYS:
            prior[key] = parsed
        else:
            other[key] = parsed
    try:
        cfg = RunConfig(fixed=FixedSettings(**fixed), prior=PriorSpec(**prior), **other)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return cfg.validate()


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return parse_config(text, str(path))


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw).validate() if kw else cfg


__all__ = [
    "OBS_HEADER", "POSTERIOR_HEADER", "BAND_HEADER", "PARAM_NAMES",
    "read_observations", "write_observations", "write_outputs", "read_posterior",
    "read_band", "band_svg", "RunConfig", "parse_config", "load_config", "ConfigError",
]
