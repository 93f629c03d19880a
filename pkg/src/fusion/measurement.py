from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..radio.errors import SingularInnovationError
from ..radio.types import GaussianLocation
from ..runtime.config import Config
from .motion import MIN_SCALE
from .types import STATE_DIM, THETA, V, Particle, wrap_angle


logger = logging.getLogger(__name__)

H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])


@dataclass(frozen=True)
class MeasurementModel:
    """WiFi fix observing position only, with covariance ``gamma * (sigma / sigma_reference)**2 * I``.

    ``sigma_reference`` defaults to 1 m, giving ``R = gamma * sigma**2 * I``.
    """

    gamma: float = Config.GAMMA
    sigma_reference: float = Config.SIGMA_REFERENCE_M

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"Invalid gamma: {self.gamma}")
        if not self.sigma_reference > 0:
            raise ValueError(f"Invalid sigma_reference: {self.sigma_reference}")

    @property
    def H(self) -> np.ndarray:
        return H

    def variance(self, sigma: float) -> float:
        return self.gamma * (float(sigma) / self.sigma_reference) ** 2

    def R(self, sigma: float) -> np.ndarray:
        return self.variance(sigma) * np.eye(2)


def kalman_correct_batch(
    states: np.ndarray,
    covs: np.ndarray,
    z: np.ndarray,
    R: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Correct ``(n, 4)`` states and ``(n, 4, 4)`` covariances with one shared position fix."""
    S = covs[:, :2, :2] + R
    det = S[:, 0, 0] * S[:, 1, 1] - S[:, 0, 1] * S[:, 1, 0]
    if not np.all(np.isfinite(det)) or np.any(det <= 0):
        raise SingularInnovationError(f"Kalman correction failed: innovation covariance singular, min det={det.min()}")
    K = covs[:, :, :2] @ np.linalg.inv(S)
    innovation = np.asarray(z, dtype=float)[None, :] - states[:, :2]
    out = states + (K @ innovation[:, :, None])[:, :, 0]
    out[:, THETA] = wrap_angle(out[:, THETA])
    out[:, V] = np.maximum(out[:, V], MIN_SCALE)
    corrected = covs - K @ covs[:, :2, :]
    return out, 0.5 * (corrected + np.swapaxes(corrected, 1, 2))


def kalman_correct(p: Particle, z: GaussianLocation, mm: MeasurementModel) -> Particle:
    states, covs = kalman_correct_batch(p.s[None, :], p.P[None, :, :], z.mu.as_array(), mm.R(z.sigma))
    return Particle(states[0], p.w, covs[0])


def kalman_gain(P: np.ndarray, R: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=float).reshape(STATE_DIM, STATE_DIM)
    return P @ H.T @ np.linalg.inv(H @ P @ H.T + R)


__all__ = ["H", "MeasurementModel", "kalman_correct", "kalman_correct_batch", "kalman_gain"]
