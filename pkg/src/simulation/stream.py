from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..radio.io import write_table
from ..radio.types import Fingerprint
from .crowdsource import draw_fingerprint
from .trajectory import OdometryStep, Trajectory
from .world import World


logger = logging.getLogger(__name__)

StreamEvent = Union[OdometryStep, Fingerprint]

ODOMETRY = "odometry"
FINGERPRINT = "fingerprint"
_KIND_ORDER = {ODOMETRY: 0, FINGERPRINT: 1}


def event_time(event: StreamEvent) -> float:
    return float(event.timestamp if isinstance(event, Fingerprint) else event.t)


def event_kind(event: StreamEvent) -> str:
    return FINGERPRINT if isinstance(event, Fingerprint) else ODOMETRY


def event_sort_key(event: StreamEvent):
    return event_time(event), _KIND_ORDER[event_kind(event)]


@dataclass(frozen=True, eq=False)
class SensorStream:
    """Time-ordered odometry and fingerprint events with the matching ground truth."""

    events: List[StreamEvent]
    truth: pd.DataFrame
    fingerprint_period: float = 0.0
    kidnap_time: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    @property
    def fingerprints(self) -> List[Fingerprint]:
        return [e for e in self.events if isinstance(e, Fingerprint)]

    @property
    def odometry(self) -> List[OdometryStep]:
        return [e for e in self.events if isinstance(e, OdometryStep)]

    def truth_at(self, t: float) -> np.ndarray:
        times = self.truth["t"].to_numpy()
        idx = int(np.clip(np.searchsorted(times, t + 1e-9, side="right") - 1, 0, len(times) - 1))
        return self.truth[["x", "y"]].to_numpy()[idx]

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for event in self.events:
            if isinstance(event, Fingerprint):
                payload = {"fp": [[mac, rss] for mac, rss in event.entries]}
            else:
                payload = {"dx": event.dx, "dy": event.dy}
            rows.append(
                {
                    "t": event_time(event),
                    "kind": event_kind(event),
                    "payload": json.dumps(payload, separators=(",", ":")),
                }
            )
        return pd.DataFrame(rows, columns=["t", "kind", "payload"])

    def save(self, events_path: Path, truth_path: Path) -> None:
        write_table(self.to_frame(), events_path)
        write_table(self.truth, truth_path)


def load_stream(events_path: Path, truth_path: Path) -> SensorStream:
    frame = pd.read_csv(events_path)
    truth = pd.read_csv(truth_path)
    events: List[StreamEvent] = []
    for t, kind, payload in frame[["t", "kind", "payload"]].itertuples(index=False):
        data = json.loads(payload)
        if kind == ODOMETRY:
            events.append(OdometryStep(float(data["dx"]), float(data["dy"]), float(t)))
        elif kind == FINGERPRINT:
            events.append(Fingerprint(tuple((mac, float(rss)) for mac, rss in data["fp"]), float(t)))
        else:
            raise ValueError(f"Invalid stream file: unknown event kind {kind!r}")
    return SensorStream(events=sorted(events, key=event_sort_key), truth=truth)


def online_stream(
    world: World,
    traj: Trajectory,
    fingerprint_period: float,
    seed: int,
    odometry: Optional[Sequence[OdometryStep]] = None,
    dropout: float = 0.0,
) -> SensorStream:
    """Merge 10 Hz odometry with fingerprints scanned at the true pose every ``fingerprint_period``."""
    if not 1.0 <= fingerprint_period <= 10.0:
        raise ValueError(f"Invalid fingerprint_period: {fingerprint_period}, expected [1, 10] s")
    rng = np.random.default_rng(seed)
    steps = list(traj.odometry if odometry is None else odometry)
    if len(steps) != len(traj.odometry):
        raise ValueError(f"Odometry length mismatch: {len(steps)} != {len(traj.odometry)}")

    t0 = float(traj.t[0])
    n_scans = int(np.floor(traj.duration / fingerprint_period + 1e-9))
    scans: List[Fingerprint] = []
    for j in range(1, n_scans + 1):
        t = t0 + j * fingerprint_period
        idx = int(np.searchsorted(traj.t, t + 1e-9, side="right") - 1)
        fp = draw_fingerprint(world, traj.xy[idx], rng, dropout=dropout, timestamp=round(t, 6))
        if fp is None:
            logger.warning("No audible access point at t=%.2f s; scan dropped", t)
            continue
        scans.append(fp)

    events: List[StreamEvent] = sorted([*steps, *scans], key=event_sort_key)
    truth = pd.DataFrame({"t": traj.t, "x": traj.xy[:, 0], "y": traj.xy[:, 1]})
    logger.info(
        "Online stream: %d odometry events, %d fingerprints (period %.1f s)",
        len(steps),
        len(scans),
        fingerprint_period,
    )
    return SensorStream(
        events=events,
        truth=truth,
        fingerprint_period=float(fingerprint_period),
        kidnap_time=traj.kidnap_time,
        metadata={"frame_rotation": traj.frame_rotation},
    )


__all__ = [
    "FINGERPRINT",
    "ODOMETRY",
    "SensorStream",
    "StreamEvent",
    "event_kind",
    "event_sort_key",
    "event_time",
    "load_stream",
    "online_stream",
]
