from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .walks import far_node, random_walk, sample_polyline
from .world import World


logger = logging.getLogger(__name__)

POSE_RATE_HZ = 10
KIDNAP_MIN_JUMP_M = 15.0


@dataclass(frozen=True)
class OdometryStep:
    dx: float
    dy: float
    t: float

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy], dtype=float)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Ground-truth poses at 10 Hz plus the odometry between consecutive poses.

    ``odometry[k]`` is the step from pose ``k`` to pose ``k + 1`` expressed in the
    odometry frame, which is the map frame rotated by ``frame_rotation``.
    """

    t: np.ndarray
    xy: np.ndarray
    heading: np.ndarray
    odometry: Tuple[OdometryStep, ...]
    frame_rotation: float = 0.0
    kidnap_time: Optional[float] = None

    def __len__(self) -> int:
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def odometry_array(self) -> np.ndarray:
        return odometry_array(self.odometry)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.t, "x": self.xy[:, 0], "y": self.xy[:, 1], "heading": self.heading})


def odometry_array(steps: Sequence[OdometryStep]) -> np.ndarray:
    return np.array([[s.dx, s.dy] for s in steps], dtype=float).reshape(-1, 2)


def rotation(angle) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def _to_steps(deltas: np.ndarray, times: np.ndarray) -> Tuple[OdometryStep, ...]:
    return tuple(OdometryStep(float(d[0]), float(d[1]), float(t)) for d, t in zip(deltas, times))


def generate_trajectory(
    world: World,
    duration: float,
    speed: float,
    seed: int,
    kidnap_at: Optional[float] = None,
    frame_rotation: Optional[float] = None,
) -> Trajectory:
    if not duration > 0:
        raise ValueError(f"Invalid duration: {duration}")
    if not speed > 0:
        raise ValueError(f"Invalid speed: {speed}")

    rng = np.random.default_rng(seed)
    n_steps = int(round(duration * POSE_RATE_HZ))
    t = np.arange(n_steps + 1) / POSE_RATE_HZ
    if frame_rotation is None:
        frame_rotation = float(rng.uniform(-math.pi, math.pi))

    kidnap_index = None
    if kidnap_at is not None:
        kidnap_index = int(round(kidnap_at * POSE_RATE_HZ))
        if not 0 < kidnap_index < n_steps:
            raise ValueError(f"Invalid kidnap_at: {kidnap_at} outside (0, {duration})")

    first_leg = n_steps if kidnap_index is None else kidnap_index - 1
    walk = random_walk(world, speed * first_leg / POSE_RATE_HZ + 1.0, rng)
    xy, heading = sample_polyline(walk, speed * t[: first_leg + 1])

    if kidnap_index is not None:
        start = far_node(world, xy[-1], KIDNAP_MIN_JUMP_M, rng)
        remaining = n_steps - kidnap_index
        second = random_walk(world, speed * remaining / POSE_RATE_HZ + 1.0, rng, start_node=start)
        xy2, heading2 = sample_polyline(second, speed * np.arange(remaining + 1) / POSE_RATE_HZ)
        xy = np.vstack([xy, xy2])
        heading = np.concatenate([heading, heading2])

    deltas = np.diff(xy, axis=0)
    if kidnap_index is not None:
        # the carried device registers no motion across the teleport
        deltas[kidnap_index - 1] = 0.0
    odo = deltas @ rotation(frame_rotation).T
    trajectory = Trajectory(
        t=t,
        xy=xy,
        heading=heading,
        odometry=_to_steps(odo, t[1:]),
        frame_rotation=float(frame_rotation),
        kidnap_time=None if kidnap_index is None else float(t[kidnap_index]),
    )
    logger.info(
        "Generated trajectory: %.1f s at %.2f m/s, %d poses%s",
        duration,
        speed,
        len(t),
        "" if kidnap_index is None else f", kidnap at {trajectory.kidnap_time:.1f} s",
    )
    return trajectory


def corrupt_odometry(
    traj: Trajectory,
    scale_error: float,
    heading_drift: float,
    noise_sigma: float,
    seed: int,
) -> List[OdometryStep]:
    """Scale, rotate by the drift accumulated at each step time, then add per-axis noise."""
    for name, value in (("scale_error", scale_error), ("heading_drift", heading_drift), ("noise_sigma", noise_sigma)):
        if not math.isfinite(value):
            raise ValueError(f"Invalid {name}: {value}")
    rng = np.random.default_rng(seed)
    steps = traj.odometry_array()
    times = np.array([s.t for s in traj.odometry], dtype=float)
    angle = heading_drift * times
    c, s = np.cos(angle), np.sin(angle)
    rotated = np.stack([c * steps[:, 0] - s * steps[:, 1], s * steps[:, 0] + c * steps[:, 1]], axis=1)
    corrupted = (1.0 + scale_error) * rotated
    if noise_sigma > 0:
        corrupted = corrupted + rng.normal(0.0, noise_sigma, size=corrupted.shape)
    return list(_to_steps(corrupted, times))


__all__ = [
    "KIDNAP_MIN_JUMP_M",
    "POSE_RATE_HZ",
    "OdometryStep",
    "Trajectory",
    "corrupt_odometry",
    "generate_trajectory",
    "odometry_array",
    "rotation",
]
