"""Odometry motion model and its analytic Jacobians.

The state ``s = [x, y, theta, v]`` moves by the odometry step ``O`` rotated by ``theta``
and scaled by ``v``; ``theta`` aligns the drifting odometry frame with the map and ``v``
absorbs step-length bias. With noise ``n = [phi_p, phi_r, phi_v]``::

    x'     = x + v (cos(theta) Ox - sin(theta) Oy)(1 + phi_p)
    y'     = y + v (sin(theta) Ox + cos(theta) Oy)(1 + phi_p)
    theta' = theta + phi_r
    v'     = v + phi_v

Writing ``d = R(theta) O`` and ``d_perp = (-d_y, d_x)``, the Jacobians at ``n = 0`` are::

    F = df/ds = I + [[0, 0, v d_perp_x, d_x],
                     [0, 0, v d_perp_y, d_y],
                     [0, 0, 0,          0  ],
                     [0, 0, 0,          0  ]]

    N = df/dn = [[v d_x, 0, 0],
                 [v d_y, 0, 0],
                 [0,     1, 0],
                 [0,     0, 1]]
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from ..runtime.config import Config
from ..simulation.trajectory import OdometryStep
from .types import NOISE_DIM, STATE_DIM, THETA, V, X, Y, Particle, ProcessNoise, wrap_angle

MIN_SCALE = 1e-3


def _rotated(states: np.ndarray, odo: np.ndarray) -> np.ndarray:
    c, s = np.cos(states[:, THETA]), np.sin(states[:, THETA])
    return np.stack([c * odo[0] - s * odo[1], s * odo[0] + c * odo[1]], axis=1)


def motion(states: np.ndarray, odo: np.ndarray, noise: Optional[np.ndarray] = None) -> np.ndarray:
    """Propagate ``(n, 4)`` states through one odometry step; ``noise`` is ``(n, 3)`` or None."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    odo = np.asarray(odo, dtype=float)
    if noise is None:
        noise = np.zeros((states.shape[0], NOISE_DIM))
    step = states[:, V:V + 1] * _rotated(states, odo) * (1.0 + noise[:, 0:1])
    out = states.copy()
    out[:, X:Y + 1] += step
    out[:, THETA] = wrap_angle(states[:, THETA] + noise[:, 1])
    out[:, V] = np.maximum(states[:, V] + noise[:, 2], MIN_SCALE)
    return out


def jacobians(states: np.ndarray, odo: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``F`` of shape ``(n, 4, 4)`` and ``N`` of shape ``(n, 4, 3)`` at zero noise."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    n = states.shape[0]
    d = _rotated(states, np.asarray(odo, dtype=float))
    v = states[:, V]

    F = np.broadcast_to(np.eye(STATE_DIM), (n, STATE_DIM, STATE_DIM)).copy()
    F[:, X, THETA] = -v * d[:, 1]
    F[:, Y, THETA] = v * d[:, 0]
    F[:, X, V] = d[:, 0]
    F[:, Y, V] = d[:, 1]

    N = np.zeros((n, STATE_DIM, NOISE_DIM))
    N[:, X, 0] = v * d[:, 0]
    N[:, Y, 0] = v * d[:, 1]
    N[:, THETA, 1] = 1.0
    N[:, V, 2] = 1.0
    return F, N


def propagate_covariance(covs: np.ndarray, F: np.ndarray, N: np.ndarray, Q: np.ndarray) -> np.ndarray:
    out = F @ covs @ np.swapaxes(F, 1, 2) + N @ Q @ np.swapaxes(N, 1, 2)
    return 0.5 * (out + np.swapaxes(out, 1, 2))


def predict_particles(
    states: np.ndarray,
    covs: np.ndarray,
    odo: np.ndarray,
    noise: ProcessNoise,
    rng: Optional[np.random.Generator] = None,
    dt: float = Config.NOISE_REFERENCE_PERIOD,
) -> Tuple[np.ndarray, np.ndarray]:
    """Move every particle and propagate its covariance; noise is sampled only when ``rng`` is given."""
    Q = noise.for_interval(dt, Config.NOISE_REFERENCE_PERIOD)
    F, N = jacobians(states, odo)
    sampled = None
    if rng is not None:
        sampled = rng.normal(size=(states.shape[0], NOISE_DIM)) * np.sqrt(np.diag(Q))
    return motion(states, odo, sampled), propagate_covariance(covs, F, N, Q)


def predict(
    p: Particle,
    O: OdometryStep,
    noise: ProcessNoise,
    rng: Optional[np.random.Generator] = None,
    dt: float = Config.NOISE_REFERENCE_PERIOD,
) -> Particle:
    states, covs = predict_particles(p.s[None, :], p.P[None, :, :], O.as_array(), noise, rng, dt)
    return Particle(states[0], p.w, covs[0])


__all__ = ["MIN_SCALE", "jacobians", "motion", "predict", "predict_particles", "propagate_covariance"]
