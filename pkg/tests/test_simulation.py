import math

import numpy as np
import pytest

from src.radio.errors import UnknownMacError, WorldSpecError
from src.radio.types import Location
from src.simulation.crowdsource import crowdsource
from src.simulation.stream import load_stream, online_stream
from src.simulation.trajectory import corrupt_odometry, generate_trajectory
from src.simulation.walks import polyline_length
from src.simulation.world import AccessPoint, World, WorldSpec, generate_world, rss_at, rss_field


def test_world_is_a_pure_function_of_the_spec():
    spec = WorldSpec(seed=9)
    a, b = generate_world(spec), generate_world(spec)
    assert a.to_dict() == b.to_dict()
    np.testing.assert_array_equal(a.segments, b.segments)


def test_default_world_places_every_ap_inside_bounds():
    world = generate_world(WorldSpec(area_w=50.0, area_h=40.0, n_aps=30, seed=1))
    assert len(world.aps) == 30
    assert all(world.bounds.contains(ap.location) for ap in world.aps)


def test_minimal_world_has_one_corridor():
    world = generate_world(WorldSpec(area_w=20.0, area_h=10.0, corridor_pitch=10.0, vertical_pitch=0.0, n_aps=1))
    assert len(world.aps) == 1
    assert len(world.segments) == 1


def test_invalid_specs_raise():
    with pytest.raises(WorldSpecError):
        generate_world(WorldSpec(n_aps=0))
    with pytest.raises(WorldSpecError):
        generate_world(WorldSpec(area_w=5.0, area_h=5.0))
    with pytest.raises(WorldSpecError):
        generate_world(WorldSpec(area_w=50.0, area_h=4.0, corridor_pitch=10.0))


def _single_ap_world():
    world = generate_world(WorldSpec(area_w=20.0, area_h=10.0, n_aps=1, shadow_sigma=0.0, ploss_exp=2.0))
    ap = AccessPoint(mac="0200000000aa", location=Location(0.0, 0.0), tx_power=-40.0, path_loss_exponent=2.0)
    return World(spec=world.spec, nodes=world.nodes, segments=world.segments, adjacency=world.adjacency, aps=(ap,), rng_seed=0)


def test_log_distance_path_loss():
    world = _single_ap_world()
    assert rss_at(world, "0200000000aa", Location(1.0, 0.0)) == pytest.approx(-40.0)
    assert rss_at(world, "0200000000aa", Location(10.0, 0.0)) == pytest.approx(-60.0)
    np.testing.assert_allclose(rss_field(world, np.array([[0.0, 10.0]]))[:, 0], [-60.0])
    with pytest.raises(UnknownMacError):
        rss_at(world, "0200000000bb", Location(1.0, 0.0))


def test_noiseless_crowdsourcing_stays_on_the_corridors(small_world):
    result = crowdsource(small_world, n_samples=150, loc_noise_sigma=0.0, dropout=0.0, seed=3)
    assert small_world.distance_to_graph(result.radio_map.locations()).max() <= 0.1


def test_location_noise_has_rayleigh_mean_offset(small_world):
    result = crowdsource(small_world, n_samples=3000, loc_noise_sigma=1.0, dropout=0.0, seed=4)
    offsets = np.linalg.norm(result.radio_map.locations() - result.true_locations, axis=1)
    assert 1.15 <= offsets.mean() <= 1.35


def test_dropout_removes_about_half_of_the_observations():
    world = generate_world(WorldSpec(area_w=20.0, area_h=20.0, n_aps=4, shadow_sigma=0.0, seed=6))
    result = crowdsource(world, n_samples=2000, loc_noise_sigma=0.0, dropout=0.5, seed=6)
    counts = {mac: 0 for mac in world.macs}
    for fp in result.radio_map.fingerprints:
        for mac in fp.macs:
            counts[mac] += 1
    for mac in world.macs:
        assert 0.45 <= counts[mac] / len(result.radio_map) <= 0.60


def test_trajectory_length_matches_speed_and_duration(small_world):
    traj = generate_trajectory(small_world, duration=60.0, speed=1.2, seed=2)
    assert 70.0 <= polyline_length(traj.xy) <= 74.0
    again = generate_trajectory(small_world, duration=60.0, speed=1.2, seed=2)
    np.testing.assert_array_equal(traj.xy, again.xy)
    assert traj.odometry == again.odometry


def test_uncorrupted_odometry_is_the_true_odometry(small_world):
    traj = generate_trajectory(small_world, duration=20.0, speed=1.2, seed=3)
    assert corrupt_odometry(traj, 0.0, 0.0, 0.0, seed=1) == list(traj.odometry)


def test_scale_error_stretches_every_step(small_world):
    traj = generate_trajectory(small_world, duration=20.0, speed=1.2, seed=3)
    clean = traj.odometry_array()
    scaled = np.array([[s.dx, s.dy] for s in corrupt_odometry(traj, 0.1, 0.0, 0.0, seed=1)])
    np.testing.assert_allclose(np.linalg.norm(scaled, axis=1), 1.1 * np.linalg.norm(clean, axis=1), rtol=1e-12)


def test_heading_drift_rotates_late_steps(small_world):
    traj = generate_trajectory(small_world, duration=100.0, speed=1.2, seed=3)
    drifted = corrupt_odometry(traj, 0.0, 0.01, 0.0, seed=1)
    last_clean = traj.odometry[-1].as_array()
    last_drift = drifted[-1].as_array()
    angle = math.atan2(last_drift[1], last_drift[0]) - math.atan2(last_clean[1], last_clean[0])
    angle = (angle + math.pi) % (2 * math.pi) - math.pi
    assert angle == pytest.approx(1.0, abs=1e-6)


def test_stream_scan_count_and_round_trip(small_world, tmp_path):
    traj = generate_trajectory(small_world, duration=60.0, speed=1.2, seed=7)
    stream = online_stream(small_world, traj, fingerprint_period=2.5, seed=7)
    assert len(stream.fingerprints) == 24
    assert len(stream.odometry) == 600
    times = [getattr(e, "t", getattr(e, "timestamp", None)) for e in stream.events]
    assert times == sorted(times)

    stream.save(tmp_path / "stream.csv", tmp_path / "truth.csv")
    loaded = load_stream(tmp_path / "stream.csv", tmp_path / "truth.csv")
    assert len(loaded.events) == len(stream.events)
    assert [fp.macs for fp in loaded.fingerprints] == [fp.macs for fp in stream.fingerprints]


def test_kidnap_teleports_only_at_the_flagged_time(small_world):
    world = generate_world(WorldSpec(area_w=50.0, area_h=40.0, seed=11))
    traj = generate_trajectory(world, duration=60.0, speed=1.2, seed=11, kidnap_at=30.0)
    assert traj.kidnap_time == pytest.approx(30.0)
    jumps = np.linalg.norm(np.diff(traj.xy, axis=0), axis=1)
    k = int(np.argmax(jumps))
    assert traj.t[k + 1] == pytest.approx(30.0)
    assert jumps[k] >= 15.0
    assert np.delete(jumps, k).max() <= 1.2 / 10 + 1e-9
    assert np.allclose(traj.odometry[k].as_array(), 0.0)
