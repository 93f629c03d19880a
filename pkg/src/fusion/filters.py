from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..radio.errors import EventOrderError
from ..radio.types import GaussianLocation, Location
from ..runtime.config import Config, read_flat_config, validate_flat_config
from ..simulation.stream import SensorStream
from ..simulation.trajectory import POSE_RATE_HZ, OdometryStep
from .measurement import MeasurementModel, kalman_correct_batch
from .motion import predict_particles
from .particles import (
    ParticleSet,
    estimate,
    gaussian_reweight,
    init_filter,
    maybe_resample,
    weight_update,
)
from .types import STATE_DIM, THETA, FilterEstimate, MeasurementEvent, ProcessNoise


logger = logging.getLogger(__name__)

FILTER_METHODS = ("ekpf", "ekf", "pf")
MEASUREMENT_SOURCES = ("localizer", "wknn")
TRAJECTORY_COLUMNS = ["t", "est_x", "est_y", "true_x", "true_y", "err", "n_eff", "spread"]

FilterEvent = Union[OdometryStep, MeasurementEvent, GaussianLocation]


@dataclass(frozen=True)
class FilterConfig:
    method: str = "ekpf"
    n_particles: int = 400
    n_p: float = 0.1
    n_r: float = 0.05
    n_v: float = 1e-4
    beta: float = 1e-4
    gamma: float = 150.0
    bandwidth: float = 1.0
    resample_ratio: float = 0.5
    seed: int = 0
    use_uncertainty: bool = True
    measurement_source: str = "localizer"
    use_prior: bool = True
    sample_process_noise: bool = True
    sigma_reference: float = 1.0
    prior_cell_size: float = 0.25

    def __post_init__(self):
        if self.method not in FILTER_METHODS:
            raise ValueError(f"Invalid filter config: method={self.method!r}, expected one of {FILTER_METHODS}")
        if self.measurement_source not in MEASUREMENT_SOURCES:
            raise ValueError(f"Invalid filter config: measurement_source={self.measurement_source!r}")
        if self.n_particles < 1:
            raise ValueError(f"Invalid filter config: n_particles={self.n_particles}")
        if not 0.0 <= self.resample_ratio <= 1.0:
            raise ValueError(f"Invalid filter config: resample_ratio={self.resample_ratio}")

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def defaults(cls) -> Dict[str, Any]:
        """Current ``Config`` values, so ``.env`` overrides reach filter configs."""
        return {
            "n_particles": Config.N_PARTICLES,
            "n_p": Config.N_P,
            "n_r": Config.N_R,
            "n_v": Config.N_V,
            "beta": Config.BETA,
            "gamma": Config.GAMMA,
            "bandwidth": Config.KDE_BANDWIDTH,
            "resample_ratio": Config.RESAMPLE_RATIO,
            "seed": Config.SEED,
            "sigma_reference": Config.SIGMA_REFERENCE_M,
            "prior_cell_size": Config.PRIOR_CELL_SIZE,
        }

    @classmethod
    def from_mapping(cls, raw: Dict[str, Any]) -> "FilterConfig":
        values = validate_flat_config(raw, "filter", cls.keys())
        return cls(**{**cls.defaults(), **values})

    @classmethod
    def from_file(cls, path: Path) -> "FilterConfig":
        return cls.from_mapping(read_flat_config(path, "filter", cls.keys()))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def process_noise(self) -> ProcessNoise:
        return ProcessNoise(self.n_p, self.n_r, self.n_v)

    @property
    def measurement_model(self) -> MeasurementModel:
        return MeasurementModel(gamma=self.gamma, sigma_reference=self.sigma_reference)


def _event_time(event: FilterEvent, fallback: float) -> float:
    if isinstance(event, OdometryStep):
        return float(event.t)
    if isinstance(event, MeasurementEvent):
        return float(event.t)
    return fallback


class FusionFilter(ABC):
    """Processes odometry and WiFi fixes strictly in time order, one event at a time."""

    name = "filter"

    def __init__(self, config: FilterConfig):
        self.config = config
        self.noise = config.process_noise
        self.measurement_model = config.measurement_model
        self.last_time: Optional[float] = None
        self.last_odometry_time: Optional[float] = None
        self.n_events = 0

    def _event_rng(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.config.seed, self.n_events]))

    def step(self, event: FilterEvent) -> Optional[FilterEstimate]:
        fallback = self.last_time if self.last_time is not None else 0.0
        t = _event_time(event, fallback)
        if self.last_time is not None and t < self.last_time:
            raise EventOrderError(f"Filter step failed: event t={t:.6f} precedes t={self.last_time:.6f}")
        if isinstance(event, OdometryStep):
            previous = self.last_odometry_time
            dt = 1.0 / POSE_RATE_HZ if previous is None else t - previous
            self.on_odometry(event.as_array(), dt)
            self.last_odometry_time = t
        else:
            fix = event.location if isinstance(event, MeasurementEvent) else event
            self.on_measurement(fix)
        self.last_time = t
        self.n_events += 1
        return self.estimate()

    @property
    def initialized(self) -> bool:
        return True

    @abstractmethod
    def on_odometry(self, odo: np.ndarray, dt: float) -> None:
        raise NotImplementedError

    @abstractmethod
    def on_measurement(self, z: GaussianLocation) -> None:
        raise NotImplementedError

    @abstractmethod
    def estimate(self) -> Optional[FilterEstimate]:
        raise NotImplementedError


class ExtendedKalmanParticleFilter(FusionFilter):
    """Particles weighted by the prior map, each carrying its own EKF correction."""

    name = "ekpf"

    def __init__(
        self,
        prior,
        config: FilterConfig,
        hint: Optional[GaussianLocation] = None,
        particles: Optional[ParticleSet] = None,
    ):
        super().__init__(config)
        self.prior = prior
        self.particles = particles if particles is not None else init_filter(
            prior,
            config.n_particles,
            config.seed,
            hint=hint,
        )

    def on_odometry(self, odo: np.ndarray, dt: float) -> None:
        rng = self._event_rng()
        p = self.particles
        p.states, p.covs = predict_particles(
            p.states,
            p.covs,
            odo,
            self.noise,
            rng if self.config.sample_process_noise else None,
            dt,
        )
        if self.config.use_prior:
            weight_update(p, self.prior)
        self.particles = maybe_resample(p, rng, self.config.resample_ratio)

    def on_measurement(self, z: GaussianLocation) -> None:
        p = self.particles
        p.states, p.covs = kalman_correct_batch(p.states, p.covs, z.mu.as_array(), self.measurement_model.R(z.sigma))

    def estimate(self) -> FilterEstimate:
        return estimate(self.particles)


class ParticleFilter(ExtendedKalmanParticleFilter):
    """Plain particle filter: WiFi fixes reweight particles instead of correcting them."""

    name = "pf"

    def on_measurement(self, z: GaussianLocation) -> None:
        rng = self._event_rng()
        gaussian_reweight(self.particles, z.mu.as_array(), self.measurement_model.variance(z.sigma))
        self.particles = maybe_resample(self.particles, rng, self.config.resample_ratio)


class ExtendedKalmanFilter(FusionFilter):
    """Single-hypothesis EKF on the same state, motion and measurement equations, no prior map.

    Without an explicit initial state it starts at the first fix with zero heading, unit scale
    and the heading variance of a uniform angle.
    """

    name = "ekf"

    def __init__(
        self,
        config: FilterConfig,
        state: Optional[np.ndarray] = None,
        covariance: Optional[np.ndarray] = None,
    ):
        super().__init__(config)
        self.state: Optional[np.ndarray] = None
        self.covariance: Optional[np.ndarray] = None
        if state is not None:
            self.state = np.asarray(state, dtype=float).reshape(1, STATE_DIM).copy()
            cov = np.diag(Config.INITIAL_COVARIANCE) if covariance is None else covariance
            self.covariance = np.asarray(cov, dtype=float).reshape(1, STATE_DIM, STATE_DIM).copy()

    @property
    def initialized(self) -> bool:
        return self.state is not None

    def on_odometry(self, odo: np.ndarray, dt: float) -> None:
        if not self.initialized:
            return
        self.state, self.covariance = predict_particles(self.state, self.covariance, odo, self.noise, None, dt)

    def on_measurement(self, z: GaussianLocation) -> None:
        if not self.initialized:
            self.state = np.array([[z.mu.x, z.mu.y, 0.0, 1.0]])
            cov = np.diag(np.asarray(Config.INITIAL_COVARIANCE, dtype=float))
            cov[THETA, THETA] = math.pi**2 / 3.0
            self.covariance = cov[None, :, :]
            return
        self.state, self.covariance = kalman_correct_batch(
            self.state,
            self.covariance,
            z.mu.as_array(),
            self.measurement_model.R(z.sigma),
        )

    def estimate(self) -> Optional[FilterEstimate]:
        if not self.initialized:
            return None
        s = self.state[0]
        spread = math.sqrt(max(float(self.covariance[0, 0, 0] + self.covariance[0, 1, 1]), 0.0))
        return FilterEstimate(location=Location(float(s[0]), float(s[1])), spread=spread, n_eff=1.0)


def build_filter(config: FilterConfig, prior=None, hint: Optional[GaussianLocation] = None) -> FusionFilter:
    if config.method == "ekf":
        return ExtendedKalmanFilter(config)
    if prior is None:
        raise ValueError(f"Filter build failed: method={config.method} needs a prior")
    cls = ParticleFilter if config.method == "pf" else ExtendedKalmanParticleFilter
    return cls(prior, config, hint=hint)


def measurement_events(
    fingerprints: Sequence,
    fixes: Sequence[Optional[GaussianLocation]],
    use_uncertainty: bool = True,
    constant_sigma: float = Config.CONSTANT_SIGMA_M,
) -> List[MeasurementEvent]:
    """Pair fixes with their scan times; scans without a fix are dropped with a warning."""
    events: List[MeasurementEvent] = []
    skipped = 0
    for fp, fix in zip(fingerprints, fixes):
        if fix is None:
            skipped += 1
            continue
        if not use_uncertainty:
            fix = GaussianLocation(fix.mu, constant_sigma)
        events.append(MeasurementEvent(float(fp.timestamp), fix))
    if skipped:
        logger.warning("%d fingerprints had no known MAC; those scans are prior-only steps", skipped)
    return events


def truth_lookup(stream: SensorStream, times: np.ndarray) -> np.ndarray:
    truth_t = stream.truth["t"].to_numpy()
    idx = np.clip(np.searchsorted(truth_t, np.asarray(times) + 1e-9, side="right") - 1, 0, len(truth_t) - 1)
    return stream.truth[["x", "y"]].to_numpy()[idx]


def trajectory_frame(stream: SensorStream, rows: List[Dict[str, float]]) -> pd.DataFrame:
    if not rows:
        return pd.DataFrame(columns=TRAJECTORY_COLUMNS)
    frame = pd.DataFrame(rows).drop_duplicates("t", keep="last").reset_index(drop=True)
    truth = truth_lookup(stream, frame["t"].to_numpy())
    frame["true_x"] = truth[:, 0]
    frame["true_y"] = truth[:, 1]
    frame["err"] = np.hypot(frame["est_x"] - frame["true_x"], frame["est_y"] - frame["true_y"])
    return frame[TRAJECTORY_COLUMNS]


def run_filter(
    stream: SensorStream,
    filt: FusionFilter,
    measurements: Sequence[MeasurementEvent],
) -> pd.DataFrame:
    """Feed odometry and fixes through ``filt`` in (time, odometry-first) order."""
    events: List[FilterEvent] = [*stream.odometry, *measurements]
    events.sort(key=lambda e: (e.t, 0 if isinstance(e, OdometryStep) else 1))
    rows: List[Dict[str, float]] = []
    for event in tqdm(events, desc=f"fuse[{filt.name}]", disable=not Config.PROGRESS, leave=False):
        result = filt.step(event)
        if result is None:
            continue
        rows.append(
            {
                "t": float(event.t),
                "est_x": result.location.x,
                "est_y": result.location.y,
                "n_eff": result.n_eff,
                "spread": result.spread,
            }
        )
    logger.info("Fused %d events with %s (%d fixes)", len(events), filt.name, len(measurements))
    return trajectory_frame(stream, rows)


__all__ = [
    "ExtendedKalmanFilter",
    "ExtendedKalmanParticleFilter",
    "FILTER_METHODS",
    "FilterConfig",
    "FusionFilter",
    "MEASUREMENT_SOURCES",
    "ParticleFilter",
    "TRAJECTORY_COLUMNS",
    "build_filter",
    "measurement_events",
    "run_filter",
    "trajectory_frame",
    "truth_lookup",
]
