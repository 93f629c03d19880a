from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, Optional, Sequence, Tuple

import numpy as np

from ..runtime.config import Config
from .errors import (
    DegenerateBoundsError,
    EmptyRadioMapError,
    RadioMapError,
    RssValidationError,
    UnknownMacError,
)


_MAC_PATTERN = re.compile(r"^[0-9a-f]{12}$")
_MAC_SEPARATORS = re.compile(r"[:\-\.\s]")


def canonical_mac(raw: str) -> str:
    """Strip separators and lowercase; reject anything that is not 12 hex digits."""
    text = _MAC_SEPARATORS.sub("", str(raw)).lower()
    if not _MAC_PATTERN.match(text):
        raise RadioMapError(f"Invalid MAC address: {raw!r}")
    return text


@dataclass(frozen=True)
class MacId:
    raw: str
    index: int


@dataclass(frozen=True)
class MacTable:
    macs: Tuple[str, ...]
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {mac: i for i, mac in enumerate(self.macs)}
        if len(index) != len(self.macs):
            raise RadioMapError("Invalid MAC table: duplicate entries")
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_macs(cls, macs: Iterable[str]) -> "MacTable":
        ordered: Dict[str, None] = {}
        for mac in macs:
            ordered.setdefault(canonical_mac(mac), None)
        return cls(tuple(ordered))

    def __len__(self) -> int:
        return len(self.macs)

    def __contains__(self, mac: object) -> bool:
        return mac in self._index

    def __iter__(self) -> Iterator[str]:
        return iter(self.macs)

    def index_of(self, mac: str) -> int:
        try:
            return self._index[mac]
        except KeyError:
            raise UnknownMacError(f"MAC not in radio map: {mac}") from None

    def mac_id(self, mac: str) -> MacId:
        return MacId(raw=mac, index=self.index_of(mac))

    def sha256(self) -> str:
        return hashlib.sha256("\n".join(self.macs).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Location:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise RadioMapError(f"Invalid location: x={self.x}, y={self.y}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    def distance_to(self, other: "Location") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Fingerprint:
    entries: Tuple[Tuple[str, float], ...]
    timestamp: float = 0.0

    def __post_init__(self):
        if not self.entries:
            raise RssValidationError("Invalid fingerprint: no entries")
        canonical = []
        seen = set()
        for mac, rss in self.entries:
            key = canonical_mac(mac)
            if key in seen:
                raise RssValidationError(f"Invalid fingerprint: duplicate MAC {key}")
            seen.add(key)
            value = float(rss)
            if not math.isfinite(value) or not (Config.RSS_MIN_DBM <= value <= Config.RSS_MAX_DBM):
                raise RssValidationError(
                    f"Invalid fingerprint: RSS {value} dBm for {key} outside "
                    f"[{Config.RSS_MIN_DBM:g}, {Config.RSS_MAX_DBM:g}]"
                )
            canonical.append((key, value))
        object.__setattr__(self, "entries", tuple(canonical))
        object.__setattr__(self, "timestamp", float(self.timestamp))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def macs(self) -> Tuple[str, ...]:
        return tuple(mac for mac, _ in self.entries)

    def as_dict(self) -> Dict[str, float]:
        return dict(self.entries)


@dataclass(frozen=True)
class Bounds:
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    @classmethod
    def from_points(cls, points: np.ndarray) -> "Bounds":
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        lo = points.min(axis=0)
        hi = points.max(axis=0)
        return cls(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    @property
    def center(self) -> Location:
        return Location((self.min_x + self.max_x) / 2.0, (self.min_y + self.max_y) / 2.0)

    def contains(self, loc: Location, tol: float = 0.0) -> bool:
        return (
            self.min_x - tol <= loc.x <= self.max_x + tol
            and self.min_y - tol <= loc.y <= self.max_y + tol
        )

    def require_non_degenerate(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise DegenerateBoundsError(
                f"Coordinate normalization failed: width={self.width:g}, height={self.height:g}"
            )


@dataclass(frozen=True)
class GaussianLocation:
    mu: Location
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise RadioMapError(f"Invalid Gaussian location: sigma={self.sigma}")


@dataclass(frozen=True)
class RadioMap:
    samples: Tuple[Tuple[Fingerprint, Location], ...]
    mac_table: MacTable
    bounds: Bounds

    def __post_init__(self):
        if not self.samples:
            raise EmptyRadioMapError("Radio map is empty")

    @classmethod
    def from_samples(
        cls,
        samples: Sequence[Tuple[Fingerprint, Location]],
        mac_table: Optional[MacTable] = None,
    ) -> "RadioMap":
        samples = tuple((fp, loc) for fp, loc in samples)
        if not samples:
            raise EmptyRadioMapError("Radio map is empty")
        seen = MacTable.from_macs(mac for fp, _ in samples for mac in fp.macs)
        if mac_table is None:
            mac_table = seen
        else:
            missing = [mac for mac in seen if mac not in mac_table]
            if missing:
                raise UnknownMacError(f"MAC table does not cover: {', '.join(missing[:5])}")
        points = np.array([[loc.x, loc.y] for _, loc in samples], dtype=float)
        return cls(samples=samples, mac_table=mac_table, bounds=Bounds.from_points(points))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def fingerprints(self) -> Tuple[Fingerprint, ...]:
        return tuple(fp for fp, _ in self.samples)

    def locations(self) -> np.ndarray:
        return np.array([[loc.x, loc.y] for _, loc in self.samples], dtype=float)


def normalize_rss(rss):
    """Linear map of [-120, 0] dBm onto [0, 1]."""
    span = Config.RSS_MAX_DBM - Config.RSS_MIN_DBM
    return (np.asarray(rss, dtype=float) - Config.RSS_MIN_DBM) / span


__all__ = [
    "Bounds",
    "Fingerprint",
    "GaussianLocation",
    "Location",
    "MacId",
    "MacTable",
    "RadioMap",
    "canonical_mac",
    "normalize_rss",
]
