import math

import numpy as np
import pytest

from src.fusion.prior_map import PriorMap, UniformPrior, build_prior, kde_field, load_prior, save_prior
from src.radio.errors import EmptyRadioMapError
from src.radio.types import Bounds, Fingerprint, Location, RadioMap


def _point_map(points):
    return RadioMap.from_samples(
        [(Fingerprint((("aaaaaaaaaaaa", -60.0),)), Location(float(x), float(y))) for x, y in points]
    )


def test_separable_kde_matches_brute_force():
    rng = np.random.default_rng(0)
    points = rng.uniform(0.0, 10.0, size=(25, 2))
    xs = np.linspace(-2.0, 12.0, 15)
    ys = np.linspace(-1.0, 11.0, 13)
    h = 1.3
    brute = np.zeros((xs.size, ys.size))
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            sq = (x - points[:, 0]) ** 2 + (y - points[:, 1]) ** 2
            brute[i, j] = np.exp(-sq / (2 * h**2)).sum() / (len(points) * 2 * math.pi * h**2)
    np.testing.assert_allclose(kde_field(points, xs, ys, h), brute, rtol=1e-9)


def test_unnormalized_peak_and_falloff():
    beta = 1e-4
    prior = build_prior(_point_map([(0.0, 0.0)]), bandwidth=1.0, beta=beta, cell_size=0.5, normalization="none")
    peak = prior.query(Location(0.0, 0.0))
    assert peak == pytest.approx(1.0 / (2 * math.pi) + beta, rel=1e-9)
    one_metre = prior.query(Location(1.0, 0.0))
    assert (one_metre - beta) / (peak - beta) == pytest.approx(math.exp(-0.5), rel=1e-9)


def test_max_normalization_peaks_at_one_plus_beta(small_map):
    prior = build_prior(small_map, bandwidth=1.0, beta=1e-4, cell_size=0.5)
    assert prior.normalization == "max"
    assert prior.grid.max() == pytest.approx(1.0 + 1e-4)
    assert prior.grid.min() >= 1e-4


def test_mass_normalization_integrates_to_one(small_map):
    prior = build_prior(small_map, bandwidth=1.0, beta=1e-6, cell_size=0.5, normalization="mass")
    mass = (prior.grid - prior.beta).sum() * prior.cell_size**2
    assert mass == pytest.approx(1.0)


def test_queries_outside_the_grid_return_beta(small_map):
    prior = build_prior(small_map, bandwidth=1.0, beta=1e-4, cell_size=0.5)
    far = Location(prior.bounds.max_x + 100.0, prior.bounds.max_y + 100.0)
    assert prior.query(far) == pytest.approx(1e-4)


def test_cell_centers_and_edges_interpolate_linearly(small_map):
    prior = build_prior(small_map, bandwidth=1.0, beta=1e-4, cell_size=0.5)
    i, j = 7, 9
    center = Location(float(prior.xs[i]), float(prior.ys[j]))
    assert prior.query(center) == pytest.approx(prior.grid[i, j])
    edge = Location(float(prior.xs[i]) + 0.25, float(prior.ys[j]))
    assert prior.query(edge) == pytest.approx(0.5 * (prior.grid[i, j] + prior.grid[i + 1, j]))
    points = np.column_stack([prior.xs[:5], prior.ys[:5]])
    np.testing.assert_allclose(prior.query_many(points), prior.grid[np.arange(5), np.arange(5)])


def test_grid_values_never_drop_below_beta():
    with pytest.raises(ValueError):
        PriorMap(grid=np.zeros((3, 3)), cell_size=1.0, origin=Location(0.0, 0.0), beta=1e-4, bandwidth=1.0)


def test_sampled_positions_land_inside_the_grid(small_map):
    prior = build_prior(small_map, bandwidth=1.0, beta=1e-4, cell_size=0.5)
    positions = prior.sample_positions(500, np.random.default_rng(0))
    bounds = prior.bounds
    half = prior.cell_size / 2
    assert positions[:, 0].min() >= bounds.min_x - half
    assert positions[:, 0].max() <= bounds.max_x + half
    assert positions[:, 1].min() >= bounds.min_y - half
    assert positions[:, 1].max() <= bounds.max_y + half
    assert np.median(prior.query_many(positions)) > 0.1


def test_uniform_prior_is_flat():
    prior = UniformPrior(Bounds(0.0, 0.0, 10.0, 5.0))
    np.testing.assert_array_equal(prior.query_many(np.array([[1.0, 1.0], [100.0, -3.0]])), [1.0, 1.0])
    positions = prior.sample_positions(200, np.random.default_rng(1))
    assert positions[:, 0].min() >= 0.0 and positions[:, 0].max() <= 10.0
    assert positions[:, 1].min() >= 0.0 and positions[:, 1].max() <= 5.0


def test_save_load_round_trip(tmp_path, small_map):
    prior = build_prior(small_map, bandwidth=1.5, beta=1e-3, cell_size=0.5)
    loaded = load_prior(save_prior(prior, tmp_path / "prior.joblib", metadata={"run": "test"}))
    np.testing.assert_array_equal(loaded.grid, prior.grid)
    assert (loaded.cell_size, loaded.origin, loaded.beta, loaded.bandwidth) == (
        prior.cell_size,
        prior.origin,
        prior.beta,
        prior.bandwidth,
    )
    frame = loaded.to_frame()
    assert list(frame.columns) == ["x", "y", "value"]
    assert len(frame) == prior.grid.size


def test_invalid_inputs_raise(small_map, tmp_path):
    with pytest.raises(EmptyRadioMapError):
        build_prior(None)
    with pytest.raises(ValueError):
        build_prior(small_map, bandwidth=0.0)
    with pytest.raises(ValueError):
        build_prior(small_map, normalization="peak")
    with pytest.raises(FileNotFoundError):
        load_prior(tmp_path / "missing.joblib")
