from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Dict, Tuple

import numpy as np

from .errors import RadioMapError
from .types import Location, RadioMap


@dataclass(frozen=True)
class CoordinateTransform:
    """Affine map ``normalized = (meters - offset) / scale`` applied per axis."""

    offset_x: float = 0.0
    offset_y: float = 0.0
    scale_x: float = 1.0
    scale_y: float = 1.0

    @classmethod
    def identity(cls) -> "CoordinateTransform":
        return cls()

    @property
    def mean_extent(self) -> float:
        return 0.5 * (self.scale_x + self.scale_y)

    def apply(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return (xy - np.array([self.offset_x, self.offset_y])) / np.array([self.scale_x, self.scale_y])

    def invert(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return xy * np.array([self.scale_x, self.scale_y]) + np.array([self.offset_x, self.offset_y])

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: Dict[str, float]) -> "CoordinateTransform":
        return cls(**{key: float(payload[key]) for key in ("offset_x", "offset_y", "scale_x", "scale_y")})


def split_train_val(radio_map: RadioMap, ratio: float, seed: int) -> Tuple[RadioMap, RadioMap]:
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"Invalid split ratio: {ratio}")
    n = len(radio_map)
    if n < 2:
        raise RadioMapError(f"Train/val split failed: N={n}, need at least 2 samples")

    order = np.random.default_rng(seed).permutation(n)
    n_train = min(max(math.ceil(ratio * n - 1e-9), 1), n - 1)
    samples = radio_map.samples
    train = [samples[i] for i in order[:n_train]]
    val = [samples[i] for i in order[n_train:]]
    return (
        RadioMap.from_samples(train, mac_table=radio_map.mac_table),
        RadioMap.from_samples(val, mac_table=radio_map.mac_table),
    )


def normalize_coordinates(radio_map: RadioMap) -> Tuple[RadioMap, CoordinateTransform]:
    bounds = radio_map.bounds
    bounds.require_non_degenerate()
    transform = CoordinateTransform(
        offset_x=bounds.min_x,
        offset_y=bounds.min_y,
        scale_x=bounds.width,
        scale_y=bounds.height,
    )
    return apply_transform(radio_map, transform), transform


def apply_transform(radio_map: RadioMap, transform: CoordinateTransform) -> RadioMap:
    normalized = transform.apply(radio_map.locations())
    samples = [
        (fp, Location(float(x), float(y)))
        for (fp, _), (x, y) in zip(radio_map.samples, normalized)
    ]
    return RadioMap.from_samples(samples, mac_table=radio_map.mac_table)


__all__ = ["CoordinateTransform", "apply_transform", "normalize_coordinates", "split_train_val"]
