"""Synthetic corridor worlds, crowdsourced radio maps, trajectories and sensor streams."""

from .crowdsource import CrowdsourceResult, crowdsource, crowdsource_radio_map
from .stream import SensorStream, load_stream, online_stream
from .trajectory import OdometryStep, Trajectory, corrupt_odometry, generate_trajectory
from .world import AccessPoint, World, WorldSpec, generate_world, rss_at, rss_field

__all__ = [
    "AccessPoint",
    "CrowdsourceResult",
    "OdometryStep",
    "SensorStream",
    "Trajectory",
    "World",
    "WorldSpec",
    "corrupt_odometry",
    "crowdsource",
    "crowdsource_radio_map",
    "generate_trajectory",
    "generate_world",
    "load_stream",
    "online_stream",
    "rss_at",
    "rss_field",
]
