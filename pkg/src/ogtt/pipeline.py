"""Read-to-posterior orchestration shared by the CLI and the experiments."""

from __future__ import annotations

from dataclasses import replace

from .inference import ObservationSet, PriorSpec, make_target
from .model import DEFAULT_STEP, FixedSettings
from .sampler import PosteriorSample, SamplerConfig, init_points_from_prior, run


def fit(obs: ObservationSet, fs: FixedSettings | None = None, spec: PriorSpec | None = None,
        cfg: SamplerConfig | None = None, grid_step: float = DEFAULT_STEP) -> PosteriorSample:
    """Posterior sample for one patient. Initial points are prior draws unless given."""
    fs = fs or FixedSettings()
    spec = (spec or PriorSpec()).resolved(obs)
    cfg = cfg or SamplerConfig()
    target = make_target(obs, fs, spec, grid_step)
    if cfg.init_points is None:
        cfg = replace(cfg, init_points=init_points_from_prior(spec, cfg.seed, target))
    return run(target, cfg)
