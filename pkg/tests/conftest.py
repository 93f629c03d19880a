import sys
from pathlib import Path

import pytest


PROJECT_ROOT = Path(__file__).resolve().parent.parent
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from src.runtime.config import Config
from src.simulation.crowdsource import crowdsource_radio_map
from src.simulation.stream import online_stream
from src.simulation.trajectory import corrupt_odometry, generate_trajectory
from src.simulation.world import WorldSpec, generate_world


@pytest.fixture(autouse=True)
def _quiet_progress(monkeypatch):
    monkeypatch.setattr(Config, "PROGRESS", False)


@pytest.fixture(scope="session")
def small_world():
    return generate_world(WorldSpec(area_w=30.0, area_h=20.0, corridor_pitch=10.0, n_aps=8, seed=3))


@pytest.fixture(scope="session")
def small_map(small_world):
    return crowdsource_radio_map(small_world, n_samples=200, loc_noise_sigma=0.5, dropout=0.0, seed=1)


@pytest.fixture(scope="session")
def small_stream(small_world):
    traj = generate_trajectory(small_world, duration=30.0, speed=1.2, seed=5)
    odometry = corrupt_odometry(traj, scale_error=0.0, heading_drift=0.0, noise_sigma=0.0, seed=5)
    return online_stream(small_world, traj, fingerprint_period=2.0, seed=5, odometry=odometry)
