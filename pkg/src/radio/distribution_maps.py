from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import pandas as pd

from ..runtime.config import Config
from .types import Location, MacTable, RadioMap, normalize_rss


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RssDistributionMap:
    mac: str
    grid: np.ndarray
    cell_size: float
    origin: Location


@dataclass(frozen=True)
class RssDistributionMaps:
    """Per-MAC RSS heatmaps stacked as ``grids[mac_index, row, col]`` (row is y, col is x)."""

    grids: np.ndarray
    cell_size: float
    origin: Location
    mac_table: MacTable

    @property
    def shape(self) -> Tuple[int, int]:
        return int(self.grids.shape[1]), int(self.grids.shape[2])

    def __len__(self) -> int:
        return len(self.mac_table)

    def __getitem__(self, mac: str) -> RssDistributionMap:
        return RssDistributionMap(
            mac=mac,
            grid=self.grids[self.mac_table.index_of(mac)],
            cell_size=self.cell_size,
            origin=self.origin,
        )

    def cell_of(self, loc: Location) -> Tuple[int, int]:
        col = int(np.floor((loc.x - self.origin.x) / self.cell_size))
        row = int(np.floor((loc.y - self.origin.y) / self.cell_size))
        return row, col

    def cell_center(self, row: int, col: int) -> Location:
        return Location(
            self.origin.x + (col + 0.5) * self.cell_size,
            self.origin.y + (row + 0.5) * self.cell_size,
        )

    def windowed(self, size: int | None = None) -> np.ndarray:
        """Resample every grid to ``size`` x ``size`` by block max (down) or repetition (up)."""
        size = int(size or Config.DIST_MAP_WINDOW)
        rows, cols = self.shape
        row_starts = np.floor(np.arange(size) * rows / size).astype(np.intp)
        col_starts = np.floor(np.arange(size) * cols / size).astype(np.intp)
        out = np.maximum.reduceat(self.grids, row_starts, axis=1)
        out = np.maximum.reduceat(out, col_starts, axis=2)
        return np.ascontiguousarray(out, dtype=float)

    def to_frame(self) -> pd.DataFrame:
        mac_idx, rows, cols = np.nonzero(self.grids)
        return pd.DataFrame(
            {
                "mac": [self.mac_table.macs[i] for i in mac_idx],
                "row": rows.astype(int),
                "col": cols.astype(int),
                "value": self.grids[mac_idx, rows, cols],
            }
        )


def grid_geometry(radio_map: RadioMap, cell_size: float) -> Tuple[Location, int, int]:
    bounds = radio_map.bounds
    origin = Location(bounds.min_x - cell_size, bounds.min_y - cell_size)
    n_cols = int(np.floor(bounds.width / cell_size)) + 3
    n_rows = int(np.floor(bounds.height / cell_size)) + 3
    return origin, n_rows, n_cols


def build_rss_distribution_maps(radio_map: RadioMap, cell_size: float | None = None) -> RssDistributionMaps:
    cell_size = float(Config.DIST_MAP_CELL_SIZE if cell_size is None else cell_size)
    if not cell_size > 0:
        raise ValueError(f"Invalid cell_size: {cell_size}")

    origin, n_rows, n_cols = grid_geometry(radio_map, cell_size)
    table = radio_map.mac_table

    mac_idx, row_idx, col_idx, rss = [], [], [], []
    for fp, loc in radio_map.samples:
        row = int(np.floor((loc.y - origin.y) / cell_size))
        col = int(np.floor((loc.x - origin.x) / cell_size))
        for mac, value in fp.entries:
            mac_idx.append(table.index_of(mac))
            row_idx.append(row)
            col_idx.append(col)
            rss.append(value)

    mac_idx = np.asarray(mac_idx, dtype=np.intp)
    row_idx = np.asarray(row_idx, dtype=np.intp)
    col_idx = np.asarray(col_idx, dtype=np.intp)
    rss = np.asarray(rss, dtype=float)

    # fixed accumulation order keeps the sums independent of sample order
    order = np.lexsort((rss, col_idx, row_idx, mac_idx))
    mac_idx, row_idx, col_idx, rss = mac_idx[order], row_idx[order], col_idx[order], rss[order]

    shape = (len(table), n_rows, n_cols)
    sums = np.zeros(shape, dtype=float)
    counts = np.zeros(shape, dtype=float)
    np.add.at(sums, (mac_idx, row_idx, col_idx), rss)
    np.add.at(counts, (mac_idx, row_idx, col_idx), 1.0)

    grids = np.zeros(shape, dtype=float)
    touched = counts > 0
    grids[touched] = normalize_rss(sums[touched] / counts[touched])
    np.clip(grids, 0.0, 1.0, out=grids)

    logger.info(
        "Built %d RSS distribution maps on a %dx%d grid (cell %.2f m)",
        len(table),
        n_rows,
        n_cols,
        cell_size,
    )
    return RssDistributionMaps(grids=grids, cell_size=cell_size, origin=origin, mac_table=table)


__all__ = [
    "RssDistributionMap",
    "RssDistributionMaps",
    "build_rss_distribution_maps",
    "grid_geometry",
]
