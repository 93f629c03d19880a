from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..radio.types import Fingerprint, Location, RadioMap
from ..radio.errors import WorldSpecError
from .walks import random_walk, sample_polyline
from .world import AUDIBILITY_DBM, World, rss_field


logger = logging.getLogger(__name__)

SAMPLE_SPACING_M = 0.6
WALK_SPEED_MPS = 1.2
MIN_WALK_M = 30.0
MAX_WALK_M = 120.0
MAX_RESAMPLE = 20


@dataclass(frozen=True, eq=False)
class CrowdsourceResult:
    radio_map: RadioMap
    true_locations: np.ndarray


def draw_fingerprint(
    world: World,
    point: np.ndarray,
    rng: np.random.Generator,
    dropout: float = 0.0,
    timestamp: float = 0.0,
) -> Optional[Fingerprint]:
    """One noisy scan at ``point``; redrawn when nothing survives, None after repeated failures."""
    macs = world.macs
    for _ in range(MAX_RESAMPLE):
        rss = rss_field(world, point, rng)[0]
        keep = rss >= AUDIBILITY_DBM
        if dropout > 0:
            keep &= rng.random(len(macs)) >= dropout
        if keep.any():
            entries = tuple((macs[i], float(rss[i])) for i in np.flatnonzero(keep))
            return Fingerprint(entries, timestamp)
    return None


def _check_audible(world: World) -> None:
    probes = np.concatenate([world.nodes, world.segments.mean(axis=1)])
    if not (rss_field(world, probes) >= AUDIBILITY_DBM).any():
        raise WorldSpecError(
            f"Crowdsourcing failed: no access point audible above {AUDIBILITY_DBM:g} dBm on the walkable graph"
        )


def crowdsource(
    world: World,
    n_samples: int,
    loc_noise_sigma: float,
    dropout: float,
    seed: int,
) -> CrowdsourceResult:
    if n_samples < 1:
        raise ValueError(f"Invalid n_samples: {n_samples}")
    if not 0.0 <= dropout < 1.0:
        raise ValueError(f"Invalid dropout: {dropout}")
    if loc_noise_sigma < 0:
        raise ValueError(f"Invalid loc_noise_sigma: {loc_noise_sigma}")
    _check_audible(world)

    rng = np.random.default_rng(seed)
    samples = []
    truth = []
    clock = 0.0
    skipped = 0
    while len(samples) < n_samples:
        walk = random_walk(world, rng.uniform(MIN_WALK_M, MAX_WALK_M), rng)
        length = float(np.linalg.norm(np.diff(walk, axis=0), axis=1).sum())
        arc = np.arange(0.0, length, SAMPLE_SPACING_M)
        points, _ = sample_polyline(walk, arc)
        for point in points:
            if len(samples) >= n_samples:
                break
            clock += SAMPLE_SPACING_M / WALK_SPEED_MPS
            fp = draw_fingerprint(world, point, rng, dropout=dropout, timestamp=round(clock, 6))
            if fp is None:
                skipped += 1
                continue
            recorded = point + rng.normal(0.0, loc_noise_sigma, size=2) if loc_noise_sigma > 0 else point
            samples.append((fp, Location(float(recorded[0]), float(recorded[1]))))
            truth.append(point)

    if skipped:
        logger.warning("Skipped %d silent sample points while crowdsourcing", skipped)
    radio_map = RadioMap.from_samples(samples)
    logger.info(
        "Crowdsourced radio map: N=%d, A=%d, loc_noise_sigma=%.2f, dropout=%.2f",
        len(radio_map),
        len(radio_map.mac_table),
        loc_noise_sigma,
        dropout,
    )
    return CrowdsourceResult(radio_map=radio_map, true_locations=np.asarray(truth, dtype=float))


def crowdsource_radio_map(
    world: World,
    n_samples: int,
    loc_noise_sigma: float,
    dropout: float,
    seed: int,
) -> RadioMap:
    return crowdsource(world, n_samples, loc_noise_sigma, dropout, seed).radio_map


__all__ = ["CrowdsourceResult", "crowdsource", "crowdsource_radio_map", "draw_fingerprint"]
