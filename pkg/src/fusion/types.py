from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..radio.types import GaussianLocation, Location

STATE_DIM = 4
NOISE_DIM = 3
X, Y, THETA, V = range(STATE_DIM)


def wrap_angle(theta):
    """Map angles onto (-pi, pi]."""
    return math.pi - np.mod(math.pi - np.asarray(theta, dtype=float), 2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class Particle:
    """One hypothesis: state ``s = [x, y, theta, v]``, importance weight ``w`` and covariance ``P``."""

    s: np.ndarray
    w: float
    P: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float).reshape(STATE_DIM)
        P = np.asarray(self.P, dtype=float).reshape(STATE_DIM, STATE_DIM)
        if self.w < 0:
            raise ValueError(f"Invalid particle weight: {self.w}")
        if s[V] <= 0:
            raise ValueError(f"Invalid particle scale: v={s[V]}")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "P", P)

    @property
    def position(self) -> np.ndarray:
        return self.s[:2]


@dataclass(frozen=True)
class ProcessNoise:
    """Variances of the odometry scale (``n_p``), heading (``n_r``) and scale drift (``n_v``) noise."""

    n_p: float
    n_r: float
    n_v: float = 1e-4

    def __post_init__(self):
        for name in ("n_p", "n_r", "n_v"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"Invalid process noise: {name}={value}")

    @property
    def Q(self) -> np.ndarray:
        return np.diag([self.n_p, self.n_r, self.n_v])

    def for_interval(self, dt: float, reference_period: float) -> np.ndarray:
        """Q for one odometry step; heading and scale noise accumulate in proportion to elapsed time."""
        ratio = max(float(dt), 0.0) / reference_period
        return np.diag([self.n_p, self.n_r * ratio, self.n_v * ratio])


@dataclass(frozen=True)
class MeasurementEvent:
    t: float
    location: GaussianLocation


@dataclass(frozen=True)
class FilterEstimate:
    location: Location
    spread: float
    n_eff: float


__all__ = [
    "FilterEstimate",
    "MeasurementEvent",
    "NOISE_DIM",
    "Particle",
    "ProcessNoise",
    "STATE_DIM",
    "THETA",
    "V",
    "X",
    "Y",
    "wrap_angle",
]
