"""Bayesian inference for a five-equation OGTT glucose minimal model."""

from ._backend import BACKEND
from .inference import ObservationSet, PriorSpec, log_likelihood, log_posterior, log_prior
from .model import FixedSettings, PatientParams, analytic_dv, glucose_at, rhs, simulate
from .pipeline import fit
from .sampler import PosteriorSample, SamplerConfig

__all__ = [
    "BACKEND", "FixedSettings", "PatientParams", "ObservationSet", "PriorSpec",
    "PosteriorSample", "SamplerConfig", "analytic_dv", "fit", "glucose_at",
    "log_likelihood", "log_posterior", "log_prior", "rhs", "simulate",
]
__version__ = "0.1.0"
