import numpy as np
import pytest

from src.radio.dataset import CoordinateTransform, normalize_coordinates, split_train_val
from src.radio.distribution_maps import build_rss_distribution_maps
from src.radio.errors import DegenerateBoundsError, RadioMapError
from src.radio.types import Fingerprint, Location, RadioMap
from src.simulation.crowdsource import crowdsource_radio_map
from src.simulation.world import WorldSpec, generate_world

MAC_A = "aaaaaaaaaaaa"
MAC_B = "bbbbbbbbbbbb"


def _map(samples):
    return RadioMap.from_samples(
        [(Fingerprint(tuple(entries)), Location(float(x), float(y))) for entries, (x, y) in samples]
    )


def test_single_sample_touches_only_its_cell():
    radio_map = _map([([(MAC_A, -60.0)], (5.0, 5.0))])
    maps = build_rss_distribution_maps(radio_map, cell_size=1.0)
    grid = maps[MAC_A].grid
    row, col = maps.cell_of(Location(5.0, 5.0))
    assert grid[row, col] == pytest.approx(0.5)
    assert np.count_nonzero(grid) == 1


def test_same_cell_contributions_are_averaged():
    radio_map = _map(
        [
            ([(MAC_A, -40.0)], (0.0, 0.0)),
            ([(MAC_A, -80.0)], (0.5, 0.5)),
            ([(MAC_A, -30.0), (MAC_B, -90.0)], (2.0, 3.0)),
        ]
    )
    maps = build_rss_distribution_maps(radio_map, cell_size=1.0)
    assert maps.shape == (6, 5)
    a = maps[MAC_A].grid
    assert a[1, 1] == pytest.approx(0.5)
    assert a[4, 3] == pytest.approx(0.75)
    b = maps[MAC_B].grid
    assert b[4, 3] == pytest.approx(0.25)
    assert np.count_nonzero(b) == 1

    window = maps.windowed(2)
    assert window.shape == (2, 2, 2)
    assert window[0, 0, 0] == pytest.approx(0.5)
    assert window[0, 1, 1] == pytest.approx(0.75)


def test_distribution_map_peaks_near_access_points():
    world = generate_world(WorldSpec(area_w=30.0, area_h=30.0, corridor_pitch=3.0, n_aps=3, shadow_sigma=0.0, seed=2))
    radio_map = crowdsource_radio_map(world, n_samples=5000, loc_noise_sigma=0.0, dropout=0.0, seed=2)
    maps = build_rss_distribution_maps(radio_map, cell_size=1.0)
    for ap in world.aps:
        grid = maps[ap.mac].grid
        row, col = np.unravel_index(int(np.argmax(grid)), grid.shape)
        center = maps.cell_center(int(row), int(col))
        # corridors every 3 m: no AP is more than 1.5 m from a sampled cell
        assert center.distance_to(ap.location) <= 2.0 * np.sqrt(2.0) + 1.5


def test_split_sizes_and_determinism(small_map):
    samples = small_map.samples[:10]
    radio_map = RadioMap.from_samples(samples, mac_table=small_map.mac_table)
    train, val = split_train_val(radio_map, 0.9, seed=4)
    assert (len(train), len(val)) == (9, 1)
    again_train, again_val = split_train_val(radio_map, 0.9, seed=4)
    assert train.samples == again_train.samples
    assert val.samples == again_val.samples


def test_split_needs_two_samples():
    radio_map = _map([([(MAC_A, -60.0)], (0.0, 0.0))])
    with pytest.raises(RadioMapError):
        split_train_val(radio_map, 0.9, seed=0)


def test_normalize_coordinates_maps_bounds_to_unit_square():
    radio_map = _map(
        [
            ([(MAC_A, -60.0)], (0.0, 0.0)),
            ([(MAC_A, -60.0)], (10.0, 20.0)),
            ([(MAC_A, -60.0)], (5.0, 10.0)),
        ]
    )
    normalized, transform = normalize_coordinates(radio_map)
    np.testing.assert_allclose(normalized.locations()[2], [0.5, 0.5])
    np.testing.assert_allclose(transform.invert(np.array([[0.5, 0.5]])), [[5.0, 10.0]])
    assert CoordinateTransform.from_dict(transform.to_dict()) == transform


def test_normalize_coordinates_rejects_flat_axis():
    radio_map = _map([([(MAC_A, -60.0)], (0.0, 3.0)), ([(MAC_A, -60.0)], (10.0, 3.0))])
    with pytest.raises(DegenerateBoundsError):
        normalize_coordinates(radio_map)
