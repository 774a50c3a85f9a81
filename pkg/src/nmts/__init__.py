"""Likelihood-free parameter estimation via ratio-free coupled stochastic
approximation, with single-timescale baselines and a rate-verification
harness."""

__version__ = "0.1.0"

from .core import Box, ProjectionResult, StepSchedule, project, two_timescale_step
from .errors import ConfigError, DegenerateDataError, GlrSingularityError, TrajectoryAborted
from .glr import BatchEstimate, GlrSample, ModelDerivatives, batch_estimates
from .models import (
    LinearLatentModel,
    LocationModel,
    ObservationSet,
    analytic_density,
    analytic_density_grad,
    analytic_mle,
    conjugate_posterior,
    get_model,
    prior_logpdf_grad,
    simulate_observations,
)

__all__ = [
    "__version__",
    "Box",
    "ProjectionResult",
    "StepSchedule",
    "project",
    "two_timescale_step",
    "ConfigError",
    "DegenerateDataError",
    "GlrSingularityError",
    "TrajectoryAborted",
    "BatchEstimate",
    "GlrSample",
    "ModelDerivatives",
    "batch_estimates",
    "LinearLatentModel",
    "LocationModel",
    "ObservationSet",
    "analytic_density",
    "analytic_density_grad",
    "analytic_mle",
    "conjugate_posterior",
    "get_model",
    "prior_logpdf_grad",
    "simulate_observations",
]
