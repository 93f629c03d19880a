from __future__ import annotations

import logging
from typing import List, Optional, Sequence

import numpy as np
from sklearn.neighbors import NearestNeighbors

from ..radio.errors import EmptyFingerprintError, EmptyRadioMapError
from ..radio.types import Fingerprint, GaussianLocation, Location, RadioMap
from ..runtime.config import Config


logger = logging.getLogger(__name__)


class WknnLocalizer:
    """Weighted k-nearest-neighbour matching over the dense RSS matrix of a radio map.

    Missing observations are imputed with ``missing_rss`` on both sides, so MACs the
    map has never seen add a constant to every squared distance.
    """

    def __init__(
        self,
        radio_map: RadioMap,
        k: int = Config.WKNN_K,
        missing_rss: float = Config.WKNN_MISSING_RSS,
        sigma_floor: float = Config.WKNN_SIGMA_FLOOR,
    ):
        if k < 1:
            raise ValueError(f"Invalid k: {k}")
        if len(radio_map) == 0:
            raise EmptyRadioMapError("WKNN requires a non-empty radio map")
        self.radio_map = radio_map
        self.k = int(k)
        self.missing_rss = float(missing_rss)
        self.sigma_floor = float(sigma_floor)
        self.locations = radio_map.locations()
        self.features = self._dense(radio_map.fingerprints)
        self.index = NearestNeighbors(algorithm="brute", metric="euclidean").fit(self.features)

    def _dense(self, fingerprints: Sequence[Fingerprint]) -> np.ndarray:
        table = self.radio_map.mac_table
        matrix = np.full((len(fingerprints), len(table)), self.missing_rss)
        for row, fp in enumerate(fingerprints):
            for mac, rss in fp.entries:
                if mac in table:
                    matrix[row, table.index_of(mac)] = rss
        return matrix

    def _unknown_penalty(self, fp: Fingerprint) -> float:
        table = self.radio_map.mac_table
        return float(sum((rss - self.missing_rss) ** 2 for mac, rss in fp.entries if mac not in table))

    def localize_many(self, fingerprints: Sequence[Fingerprint], k: Optional[int] = None) -> List[GaussianLocation]:
        if not fingerprints:
            return []
        table = self.radio_map.mac_table
        for fp in fingerprints:
            if not any(mac in table for mac in fp.macs):
                raise EmptyFingerprintError(f"Fingerprint at t={fp.timestamp:g} has no MAC known to the radio map")
        k = min(int(k or self.k), len(self.locations))
        distances, neighbours = self.index.kneighbors(self._dense(fingerprints), n_neighbors=k)
        penalty = np.array([self._unknown_penalty(fp) for fp in fingerprints])
        distances = np.sqrt(distances**2 + penalty[:, None])

        weights = 1.0 / (distances + 1e-6)
        weights /= weights.sum(axis=1, keepdims=True)
        points = self.locations[neighbours]
        mu = np.einsum("nk,nki->ni", weights, points)
        spread = np.sqrt(np.einsum("nk,nki->ni", weights, (points - mu[:, None, :]) ** 2))
        sigma = np.maximum(spread.mean(axis=1), self.sigma_floor)
        return [
            GaussianLocation(Location(float(m[0]), float(m[1])), float(s))
            for m, s in zip(mu, sigma)
        ]

    def localize(self, fp: Fingerprint, k: Optional[int] = None) -> GaussianLocation:
        return self.localize_many([fp], k=k)[0]


def wknn_localize(radio_map: RadioMap, fp: Fingerprint, k: int = Config.WKNN_K) -> GaussianLocation:
    return WknnLocalizer(radio_map, k=k).localize(fp)


__all__ = ["WknnLocalizer", "wknn_localize"]
