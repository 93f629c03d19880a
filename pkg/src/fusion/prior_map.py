"""Kernel-density prior over where people walk, built from radio map sample locations."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd
from joblib import dump, load
from scipy.interpolate import RegularGridInterpolator

from ..radio.errors import EmptyRadioMapError
from ..radio.types import Bounds, Location, RadioMap
from ..runtime.config import Config


logger = logging.getLogger(__name__)

PRIOR_FORMAT = "radiomap-prior/1"
NORMALIZATIONS = ("max", "mass", "none")
PAD_BANDWIDTHS = 3.0


@dataclass(frozen=True, eq=False)
class PriorMap:
    """Likelihood grid sampled at cell centers; ``grid[i, j]`` sits at ``origin + (i, j) * cell_size``."""

    grid: np.ndarray
    cell_size: float
    origin: Location
    beta: float
    bandwidth: float
    normalization: str = "max"

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 2 or min(grid.shape) < 2:
            raise ValueError(f"Invalid prior grid shape: {grid.shape}")
        if not np.all(np.isfinite(grid)):
            raise ValueError("Invalid prior grid: non-finite values")
        if self.beta <= 0 or grid.min() < self.beta * (1.0 - 1e-12):
            raise ValueError(f"Invalid prior grid: values must be >= beta={self.beta:g}")
        object.__setattr__(self, "grid", grid)

    @property
    def shape(self):
        return self.grid.shape

    @property
    def xs(self) -> np.ndarray:
        return self.origin.x + self.cell_size * np.arange(self.grid.shape[0])

    @property
    def ys(self) -> np.ndarray:
        return self.origin.y + self.cell_size * np.arange(self.grid.shape[1])

    @property
    def bounds(self) -> Bounds:
        xs, ys = self.xs, self.ys
        return Bounds(float(xs[0]), float(ys[0]), float(xs[-1]), float(ys[-1]))

    @cached_property
    def _interpolator(self) -> RegularGridInterpolator:
        return RegularGridInterpolator(
            (self.xs, self.ys),
            self.grid,
            method="linear",
            bounds_error=False,
            fill_value=self.beta,
        )

    def query_many(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self._interpolator(points)

    def query(self, loc: Location) -> float:
        return float(self.query_many(loc.as_array()[None, :])[0])

    def sample_positions(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Inverse-CDF draw over cells, uniform inside the chosen cell."""
        cdf = np.cumsum(self.grid.ravel())
        flat = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
        ix, iy = np.unravel_index(np.minimum(flat, cdf.size - 1), self.grid.shape)
        jitter = rng.uniform(-0.5, 0.5, size=(n, 2)) * self.cell_size
        return np.column_stack([self.xs[ix], self.ys[iy]]) + jitter

    def to_frame(self) -> pd.DataFrame:
        gx, gy = np.meshgrid(self.xs, self.ys, indexing="ij")
        return pd.DataFrame({"x": gx.ravel(), "y": gy.ravel(), "value": self.grid.ravel()})


@dataclass(frozen=True)
class UniformPrior:
    """Flat prior over a bounding box; leaves particle weights untouched."""

    bounds: Bounds
    beta: float = 1.0

    def query_many(self, points: np.ndarray) -> np.ndarray:
        return np.ones(np.atleast_2d(points).shape[0])

    def query(self, loc: Location) -> float:
        return 1.0

    def sample_positions(self, n: int, rng: np.random.Generator) -> np.ndarray:
        low = [self.bounds.min_x, self.bounds.min_y]
        high = [self.bounds.max_x, self.bounds.max_y]
        return rng.uniform(low, high, size=(n, 2))


def kde_field(points: np.ndarray, xs: np.ndarray, ys: np.ndarray, bandwidth: float) -> np.ndarray:
    """Isotropic 2-D Gaussian KDE on the ``xs`` by ``ys`` lattice, via the separable product kernel."""
    points = np.asarray(points, dtype=float)
    h2 = 2.0 * bandwidth**2
    kx = np.exp(-((xs[None, :] - points[:, 0:1]) ** 2) / h2)
    ky = np.exp(-((ys[None, :] - points[:, 1:2]) ** 2) / h2)
    return (kx.T @ ky) / (len(points) * 2.0 * math.pi * bandwidth**2)


def build_prior(
    radio_map: RadioMap,
    bandwidth: float = Config.KDE_BANDWIDTH,
    beta: float = Config.BETA,
    cell_size: float = Config.PRIOR_CELL_SIZE,
    normalization: Optional[str] = None,
) -> PriorMap:
    if radio_map is None or len(radio_map) == 0:
        raise EmptyRadioMapError("Prior map build failed: radio map is empty")
    if bandwidth <= 0:
        raise ValueError(f"Invalid bandwidth: {bandwidth}")
    if beta <= 0:
        raise ValueError(f"Invalid beta: {beta}")
    if cell_size <= 0:
        raise ValueError(f"Invalid cell_size: {cell_size}")
    normalization = normalization or Config.PRIOR_NORMALIZATION
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"Invalid normalization: {normalization!r}, expected one of {NORMALIZATIONS}")

    points = radio_map.locations()
    pad = PAD_BANDWIDTHS * bandwidth
    lo = points.min(axis=0) - pad
    extent = points.max(axis=0) + pad - lo
    nx, ny = (np.ceil(extent / cell_size).astype(int) + 1).tolist()
    xs = lo[0] + cell_size * np.arange(nx)
    ys = lo[1] + cell_size * np.arange(ny)

    field = kde_field(points, xs, ys, bandwidth)
    if normalization == "max":
        field = field / field.max()
    elif normalization == "mass":
        field = field / (field.sum() * cell_size**2)

    prior = PriorMap(
        grid=field + beta,
        cell_size=float(cell_size),
        origin=Location(float(lo[0]), float(lo[1])),
        beta=float(beta),
        bandwidth=float(bandwidth),
        normalization=normalization,
    )
    logger.info(
        "Prior map: %dx%d cells of %.2f m from %d samples (h=%.2f, beta=%.1e, %s)",
        nx,
        ny,
        cell_size,
        len(points),
        bandwidth,
        beta,
        normalization,
    )
    return prior


def query(prior, loc: Location) -> float:
    return prior.query(loc)


def save_prior(prior: PriorMap, path: Path, *, metadata: Dict[str, Any] | None = None) -> Path:
    payload = {
        "format": PRIOR_FORMAT,
        "metadata": dict(metadata or {}),
        "grid": prior.grid,
        "cell_size": prior.cell_size,
        "origin": [prior.origin.x, prior.origin.y],
        "beta": prior.beta,
        "bandwidth": prior.bandwidth,
        "normalization": prior.normalization,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dump(payload, path)
    return path


def load_prior(path: Path) -> PriorMap:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Prior map does not exist: {path}")
    payload = load(path)
    if not isinstance(payload, dict) or payload.get("format") != PRIOR_FORMAT:
        raise ValueError(f"Invalid prior map file: {path}")
    return PriorMap(
        grid=np.asarray(payload["grid"], dtype=float),
        cell_size=float(payload["cell_size"]),
        origin=Location(*map(float, payload["origin"])),
        beta=float(payload["beta"]),
        bandwidth=float(payload["bandwidth"]),
        normalization=payload.get("normalization", "max"),
    )


__all__ = [
    "NORMALIZATIONS",
    "PRIOR_FORMAT",
    "PriorMap",
    "UniformPrior",
    "build_prior",
    "kde_field",
    "load_prior",
    "query",
    "save_prior",
]
