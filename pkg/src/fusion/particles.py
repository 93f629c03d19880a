from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from ..radio.types import GaussianLocation, Location
from ..runtime.config import Config
from .types import STATE_DIM, THETA, V, FilterEstimate, Particle, wrap_angle


logger = logging.getLogger(__name__)


@dataclass(eq=False)
class ParticleSet:
    """Struct-of-arrays particle cloud: states ``(n, 4)``, weights ``(n,)``, covariances ``(n, 4, 4)``."""

    states: np.ndarray
    weights: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        n = self.states.shape[0]
        if self.states.shape != (n, STATE_DIM) or self.weights.shape != (n,) or self.covs.shape != (n, STATE_DIM, STATE_DIM):
            raise ValueError(
                f"Invalid particle set shapes: states={self.states.shape}, "
                f"weights={self.weights.shape}, covs={self.covs.shape}"
            )

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :2]

    def particle(self, i: int) -> Particle:
        return Particle(self.states[i].copy(), float(self.weights[i]), self.covs[i].copy())

    def copy(self) -> "ParticleSet":
        return ParticleSet(self.states.copy(), self.weights.copy(), self.covs.copy())

    @classmethod
    def from_particles(cls, particles: Sequence[Particle]) -> "ParticleSet":
        return cls(
            np.stack([p.s for p in particles]),
            np.array([p.w for p in particles], dtype=float),
            np.stack([p.P for p in particles]),
        )


def init_filter(
    prior,
    n_particles: int,
    seed: int,
    hint: Optional[GaussianLocation] = None,
    initial_covariance: Sequence[float] = Config.INITIAL_COVARIANCE,
) -> ParticleSet:
    """Draw positions from the prior (or the ``hint`` Gaussian), headings uniformly, unit scale."""
    if n_particles < 1:
        raise ValueError(f"Invalid n_particles: {n_particles}")
    rng = np.random.default_rng(seed)
    if hint is None:
        positions = prior.sample_positions(n_particles, rng)
    else:
        positions = rng.normal(hint.mu.as_array(), hint.sigma, size=(n_particles, 2))
    states = np.empty((n_particles, STATE_DIM))
    states[:, :2] = positions
    states[:, THETA] = wrap_angle(rng.uniform(-math.pi, math.pi, size=n_particles))
    states[:, V] = 1.0
    covs = np.broadcast_to(np.diag(np.asarray(initial_covariance, dtype=float)), (n_particles, STATE_DIM, STATE_DIM))
    return ParticleSet(states, np.full(n_particles, 1.0 / n_particles), covs.copy())


def normalize_weights(particles: ParticleSet, stage: str) -> ParticleSet:
    total = particles.weights.sum()
    if not (np.isfinite(total) and total > 0):
        logger.warning("All particle weights vanished after %s; resetting to uniform", stage)
        particles.weights = np.full(len(particles), 1.0 / len(particles))
    else:
        particles.weights = particles.weights / total
    return particles


def weight_update(particles: ParticleSet, prior) -> ParticleSet:
    """Multiply weights by the prior likelihood at each position and renormalize."""
    particles.weights = particles.weights * prior.query_many(particles.positions)
    return normalize_weights(particles, "prior weighting")


def gaussian_reweight(particles: ParticleSet, z: np.ndarray, variance: float) -> ParticleSet:
    """Multiply weights by an isotropic Gaussian likelihood of the fix, in log space."""
    sq = np.sum((particles.positions - np.asarray(z, dtype=float)) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        log_w = np.log(particles.weights) - 0.5 * sq / variance
    if not np.any(np.isfinite(log_w)):
        particles.weights = np.zeros(len(particles))
        return normalize_weights(particles, "measurement weighting")
    particles.weights = np.exp(log_w - np.max(log_w))
    return normalize_weights(particles, "measurement weighting")


def effective_sample_size(particles: Union[ParticleSet, np.ndarray]) -> float:
    weights = particles.weights if isinstance(particles, ParticleSet) else np.asarray(particles, dtype=float)
    return float(1.0 / np.sum(weights**2))


def systematic_indices(weights: np.ndarray, u: float) -> np.ndarray:
    """Parents picked by one comb of ``n`` teeth offset by ``u`` in ``[0, 1/n)``."""
    n = len(weights)
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, u + np.arange(n) / n, side="right")


def systematic_resample(particles: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    """Offspring copy state and covariance from their parents; weights reset to uniform."""
    n = len(particles)
    idx = systematic_indices(particles.weights, rng.random() / n)
    return ParticleSet(particles.states[idx].copy(), np.full(n, 1.0 / n), particles.covs[idx].copy())


def maybe_resample(particles: ParticleSet, rng: np.random.Generator, ratio: float = Config.RESAMPLE_RATIO) -> ParticleSet:
    if effective_sample_size(particles) < ratio * len(particles):
        return systematic_resample(particles, rng)
    return particles


def estimate(particles: ParticleSet) -> FilterEstimate:
    w = particles.weights
    location = w @ particles.positions
    spread = math.sqrt(float(w @ np.sum((particles.positions - location) ** 2, axis=1)))
    return FilterEstimate(
        location=Location(float(location[0]), float(location[1])),
        spread=spread,
        n_eff=effective_sample_size(w),
    )


__all__ = [
    "ParticleSet",
    "effective_sample_size",
    "estimate",
    "gaussian_reweight",
    "init_filter",
    "maybe_resample",
    "normalize_weights",
    "systematic_indices",
    "systematic_resample",
    "weight_update",
]
