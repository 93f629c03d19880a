from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..radio.errors import UnknownMacError, WorldSpecError
from ..radio.types import Bounds, Location
from ..runtime.config import Config, read_flat_config


logger = logging.getLogger(__name__)

AUDIBILITY_DBM = -95.0
MIN_DISTANCE_M = 0.1
_EPS = 1e-9


@dataclass(frozen=True)
class WorldSpec:
    area_w: float = 50.0
    area_h: float = 40.0
    corridor_pitch: float = 10.0
    vertical_pitch: Optional[float] = None
    n_aps: int = 30
    tx_power: float = -40.0
    ploss_exp: float = 2.5
    shadow_sigma: float = 4.0
    seed: int = 0

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, raw: Dict) -> "WorldSpec":
        values = {}
        for f in fields(cls):
            if f.name not in raw or raw[f.name] is None:
                continue
            caster = int if f.name in {"n_aps", "seed"} else float
            values[f.name] = caster(raw[f.name])
        return cls(**values)

    @classmethod
    def from_file(cls, path: Path) -> "WorldSpec":
        return cls.from_mapping(read_flat_config(path, "world", cls.keys()))

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class AccessPoint:
    mac: str
    location: Location
    tx_power: float
    path_loss_exponent: float


@dataclass(frozen=True, eq=False)
class World:
    spec: WorldSpec
    nodes: np.ndarray
    segments: np.ndarray
    adjacency: Tuple[Tuple[int, ...], ...]
    aps: Tuple[AccessPoint, ...]
    rng_seed: int
    _ap_index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_ap_index", {ap.mac: i for i, ap in enumerate(self.aps)})

    @property
    def bounds(self) -> Bounds:
        return Bounds(0.0, 0.0, float(self.spec.area_w), float(self.spec.area_h))

    @property
    def macs(self) -> Tuple[str, ...]:
        return tuple(ap.mac for ap in self.aps)

    def ap(self, mac: str) -> AccessPoint:
        try:
            return self.aps[self._ap_index[mac]]
        except KeyError:
            raise UnknownMacError(f"MAC not in world: {mac}") from None

    def ap_positions(self) -> np.ndarray:
        return np.array([[ap.location.x, ap.location.y] for ap in self.aps], dtype=float)

    def distance_to_graph(self, points: np.ndarray) -> np.ndarray:
        """Distance from each point to the nearest corridor segment."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        a = self.segments[:, 0, :]
        ab = self.segments[:, 1, :] - a
        length_sq = np.maximum(np.einsum("ij,ij->i", ab, ab), _EPS)
        ap = points[:, None, :] - a[None, :, :]
        u = np.clip(np.einsum("nki,ki->nk", ap, ab) / length_sq, 0.0, 1.0)
        closest = a[None, :, :] + u[..., None] * ab[None, :, :]
        return np.linalg.norm(points[:, None, :] - closest, axis=-1).min(axis=1)

    def to_dict(self) -> Dict:
        return {
            "spec": self.spec.to_dict(),
            "aps": [
                {
                    "mac": ap.mac,
                    "loc": [ap.location.x, ap.location.y],
                    "tx_power": ap.tx_power,
                    "path_loss_exponent": ap.path_loss_exponent,
                }
                for ap in self.aps
            ],
            "n_nodes": int(len(self.nodes)),
            "n_segments": int(len(self.segments)),
        }


def _line_positions(extent: float, pitch: float) -> np.ndarray:
    margin = pitch / 2.0
    if extent - margin < margin - _EPS:
        return np.empty(0)
    return np.arange(margin, extent - margin + _EPS, pitch)


def _corridor_graph(spec: WorldSpec):
    h_pitch = float(spec.corridor_pitch)
    v_pitch = float(spec.corridor_pitch if spec.vertical_pitch is None else spec.vertical_pitch)
    ys = _line_positions(spec.area_h, h_pitch)
    xs = _line_positions(spec.area_w, v_pitch) if v_pitch > 0 else np.empty(0)

    margin_x = (v_pitch if v_pitch > 0 else h_pitch) / 2.0
    margin_y = h_pitch / 2.0
    node_ids: Dict[Tuple[float, float], int] = {}
    edges = set()

    def node(x: float, y: float) -> int:
        key = (round(float(x), 6), round(float(y), 6))
        if key not in node_ids:
            node_ids[key] = len(node_ids)
        return node_ids[key]

    def add_line(points: List[Tuple[float, float]]):
        ids = [node(x, y) for x, y in points]
        for a, b in zip(ids[:-1], ids[1:]):
            if a != b:
                edges.add((min(a, b), max(a, b)))

    x_lo, x_hi = margin_x, spec.area_w - margin_x
    y_lo, y_hi = margin_y, spec.area_h - margin_y
    if x_hi > x_lo + _EPS:
        for y in ys:
            stops = np.unique(np.concatenate([[x_lo, x_hi], xs]))
            add_line([(x, y) for x in stops])
    if y_hi > y_lo + _EPS:
        for x in xs:
            stops = np.unique(np.concatenate([[y_lo, y_hi], ys]))
            add_line([(x, y) for y in stops])

    if not edges:
        raise WorldSpecError(
            f"World generation failed: no corridor fits area={spec.area_w:g}x{spec.area_h:g}, "
            f"corridor_pitch={spec.corridor_pitch:g}"
        )

    nodes = np.array(sorted(node_ids, key=node_ids.get), dtype=float)
    ordered_edges = sorted(edges)
    segments = np.array([[nodes[a], nodes[b]] for a, b in ordered_edges], dtype=float)
    neighbours: List[List[int]] = [[] for _ in range(len(nodes))]
    for a, b in ordered_edges:
        neighbours[a].append(b)
        neighbours[b].append(a)
    adjacency = tuple(tuple(sorted(n)) for n in neighbours)
    return nodes, segments, adjacency


def _validate_spec(spec: WorldSpec) -> None:
    if spec.n_aps < 1:
        raise WorldSpecError(f"Invalid world spec: n_aps={spec.n_aps}, need at least 1")
    if spec.area_w <= 0 or spec.area_h <= 0 or spec.area_w * spec.area_h < 100.0:
        raise WorldSpecError(
            f"Invalid world spec: area={spec.area_w:g}x{spec.area_h:g}, need at least 100 m^2"
        )
    if spec.corridor_pitch <= 0:
        raise WorldSpecError(f"Invalid world spec: corridor_pitch={spec.corridor_pitch}")
    if spec.vertical_pitch is not None and spec.vertical_pitch < 0:
        raise WorldSpecError(f"Invalid world spec: vertical_pitch={spec.vertical_pitch}")
    if not 1.5 <= spec.ploss_exp <= 4.0:
        raise WorldSpecError(f"Invalid world spec: ploss_exp={spec.ploss_exp}, expected [1.5, 4.0]")
    if spec.shadow_sigma < 0:
        raise WorldSpecError(f"Invalid world spec: shadow_sigma={spec.shadow_sigma}")


def generate_world(spec: WorldSpec, n_aps: Optional[int] = None, seed: Optional[int] = None) -> World:
    """Corridor-grid building with uniformly placed access points; a pure function of ``spec``."""
    overrides = {}
    if n_aps is not None:
        overrides["n_aps"] = int(n_aps)
    if seed is not None:
        overrides["seed"] = int(seed)
    if overrides:
        spec = WorldSpec(**{**spec.to_dict(), **overrides})
    _validate_spec(spec)

    nodes, segments, adjacency = _corridor_graph(spec)
    rng = np.random.default_rng(spec.seed)
    positions = rng.uniform([0.0, 0.0], [spec.area_w, spec.area_h], size=(spec.n_aps, 2))
    prefix = 0x020000000000 + ((spec.seed % 0xFFFF) << 20)
    aps = tuple(
        AccessPoint(
            mac=f"{prefix + i:012x}",
            location=Location(float(x), float(y)),
            tx_power=float(spec.tx_power),
            path_loss_exponent=float(spec.ploss_exp),
        )
        for i, (x, y) in enumerate(positions)
    )
    logger.info(
        "Generated world %gx%g m: %d corridor segments, %d APs (seed=%d)",
        spec.area_w,
        spec.area_h,
        len(segments),
        len(aps),
        spec.seed,
    )
    return World(
        spec=spec,
        nodes=nodes,
        segments=segments,
        adjacency=adjacency,
        aps=aps,
        rng_seed=spec.seed,
    )


def rss_field(
    world: World,
    points: np.ndarray,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """RSS of every AP at every point (rows are points). Noiseless when ``rng`` is None."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    aps = world.ap_positions()
    tx = np.array([ap.tx_power for ap in world.aps])
    n = np.array([ap.path_loss_exponent for ap in world.aps])
    d = np.maximum(np.linalg.norm(points[:, None, :] - aps[None, :, :], axis=-1), MIN_DISTANCE_M)
    rss = tx[None, :] - 10.0 * n[None, :] * np.log10(d)
    if rng is not None and world.spec.shadow_sigma > 0:
        rss = rss + rng.normal(0.0, world.spec.shadow_sigma, size=rss.shape)
    return np.clip(rss, Config.RSS_MIN_DBM, Config.RSS_MAX_DBM)


def rss_at(world: World, ap: str, loc: Location, rng: Optional[np.random.Generator] = None) -> float:
    access_point = world.ap(ap)
    d = max(float(np.hypot(loc.x - access_point.location.x, loc.y - access_point.location.y)), MIN_DISTANCE_M)
    rss = access_point.tx_power - 10.0 * access_point.path_loss_exponent * np.log10(d)
    if rng is not None and world.spec.shadow_sigma > 0:
        rss += rng.normal(0.0, world.spec.shadow_sigma)
    return float(np.clip(rss, Config.RSS_MIN_DBM, Config.RSS_MAX_DBM))


__all__ = [
    "AUDIBILITY_DBM",
    "AccessPoint",
    "World",
    "WorldSpec",
    "generate_world",
    "rss_at",
    "rss_field",
]
