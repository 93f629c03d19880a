"""Radio map domain types, file IO, RSS distribution maps and dataset helpers."""

from .dataset import CoordinateTransform, apply_transform, normalize_coordinates, split_train_val
from .distribution_maps import RssDistributionMap, RssDistributionMaps, build_rss_distribution_maps
from .io import load_radio_map, save_radio_map, write_table
from .types import (
    Bounds,
    Fingerprint,
    GaussianLocation,
    Location,
    MacId,
    MacTable,
    RadioMap,
    canonical_mac,
    normalize_rss,
)

__all__ = [
    "Bounds",
    "CoordinateTransform",
    "Fingerprint",
    "GaussianLocation",
    "Location",
    "MacId",
    "MacTable",
    "RadioMap",
    "RssDistributionMap",
    "RssDistributionMaps",
    "apply_transform",
    "build_rss_distribution_maps",
    "canonical_mac",
    "load_radio_map",
    "normalize_coordinates",
    "normalize_rss",
    "save_radio_map",
    "split_train_val",
    "write_table",
]
