"""Prior map, motion and measurement models, and the EKPF/EKF/PF fusion engines."""

from .filters import (
    TRAJECTORY_COLUMNS,
    ExtendedKalmanFilter,
    ExtendedKalmanParticleFilter,
    FilterConfig,
    FusionFilter,
    ParticleFilter,
    build_filter,
    measurement_events,
    run_filter,
)
from .measurement import MeasurementModel, kalman_correct, kalman_correct_batch
from .methods import FusionInputs, MethodRegistry, run_method
from .motion import jacobians, motion, predict, predict_particles
from .particles import (
    ParticleSet,
    effective_sample_size,
    estimate,
    init_filter,
    systematic_resample,
    weight_update,
)
from .prior_map import PriorMap, UniformPrior, build_prior, load_prior, query, save_prior
from .types import FilterEstimate, MeasurementEvent, Particle, ProcessNoise, wrap_angle

__all__ = [
    "ExtendedKalmanFilter",
    "ExtendedKalmanParticleFilter",
    "FilterConfig",
    "FilterEstimate",
    "FusionFilter",
    "FusionInputs",
    "MeasurementEvent",
    "MeasurementModel",
    "MethodRegistry",
    "Particle",
    "ParticleFilter",
    "ParticleSet",
    "PriorMap",
    "ProcessNoise",
    "TRAJECTORY_COLUMNS",
    "UniformPrior",
    "build_filter",
    "build_prior",
    "effective_sample_size",
    "estimate",
    "init_filter",
    "jacobians",
    "kalman_correct",
    "kalman_correct_batch",
    "load_prior",
    "measurement_events",
    "motion",
    "predict",
    "predict_particles",
    "query",
    "run_filter",
    "run_method",
    "save_prior",
    "systematic_resample",
    "weight_update",
    "wrap_angle",
]
