import math

import numpy as np
import pytest

from src.fusion.particles import (
    ParticleSet,
    effective_sample_size,
    estimate,
    gaussian_reweight,
    init_filter,
    maybe_resample,
    systematic_indices,
    systematic_resample,
    weight_update,
)
from src.fusion.prior_map import PriorMap, UniformPrior
from src.radio.types import Bounds, GaussianLocation, Location


def _particles(positions, weights):
    positions = np.asarray(positions, dtype=float)
    n = len(positions)
    states = np.column_stack([positions, np.zeros(n), np.ones(n)])
    covs = np.stack([np.eye(4) * (i + 1) for i in range(n)])
    return ParticleSet(states, np.asarray(weights, dtype=float), covs)


def test_effective_sample_size_reference_values():
    assert effective_sample_size(np.full(400, 1.0 / 400)) == pytest.approx(400.0)
    assert effective_sample_size(np.array([1.0, 0.0, 0.0])) == pytest.approx(1.0)
    assert effective_sample_size(np.array([0.5, 0.5, 0.0, 0.0])) == pytest.approx(2.0)


def test_systematic_offspring_counts_are_floor_or_ceil():
    weights = np.array([0.75, 0.25, 0.0, 0.0])
    for u in np.linspace(0.0, 0.25, 50, endpoint=False):
        counts = np.bincount(systematic_indices(weights, u), minlength=4)
        np.testing.assert_array_equal(counts, [3, 1, 0, 0])

    rng = np.random.default_rng(3)
    weights = rng.dirichlet(np.ones(37))
    n = len(weights)
    for u in rng.random(200) / n:
        counts = np.bincount(systematic_indices(weights, u), minlength=n)
        assert counts.sum() == n
        assert np.all(counts >= np.floor(n * weights))
        assert np.all(counts <= np.ceil(n * weights))


def test_systematic_offspring_are_unbiased():
    weights = np.array([0.1, 0.2, 0.3, 0.4])
    ps = _particles([[0, 0], [1, 0], [2, 0], [3, 0]], weights)
    rng = np.random.default_rng(0)
    totals = np.zeros(4)
    draws = 4000
    for _ in range(draws):
        child = systematic_resample(ps, rng)
        totals += np.bincount(child.states[:, 0].astype(int), minlength=4)
    np.testing.assert_allclose(totals / (draws * 4), weights, atol=0.02)


def test_offspring_copy_their_parent_covariance():
    ps = _particles([[0, 0], [1, 0], [2, 0], [3, 0]], [0.1, 0.2, 0.3, 0.4])
    child = systematic_resample(ps, np.random.default_rng(5))
    for state, cov in zip(child.states, child.covs):
        parent = int(state[0])
        np.testing.assert_array_equal(cov, ps.covs[parent])
    np.testing.assert_array_equal(child.weights, np.full(4, 0.25))


def test_resampling_waits_for_degeneracy():
    even = _particles([[0, 0], [1, 0]], [0.5, 0.5])
    assert maybe_resample(even, np.random.default_rng(0), 0.5) is even
    skewed = _particles([[0, 0], [1, 0], [2, 0], [3, 0]], [0.97, 0.01, 0.01, 0.01])
    resampled = maybe_resample(skewed, np.random.default_rng(0), 0.5)
    assert resampled is not skewed
    np.testing.assert_array_equal(resampled.weights, np.full(4, 0.25))


def test_prior_weighting_follows_the_prior_values():
    prior = PriorMap(
        grid=np.array([[1.0, 2.0], [3.0, 4.0]]),
        cell_size=1.0,
        origin=Location(0.0, 0.0),
        beta=0.5,
        bandwidth=1.0,
    )
    ps = weight_update(_particles([[0, 0], [1, 1]], [0.5, 0.5]), prior)
    np.testing.assert_allclose(ps.weights, [0.2, 0.8])


def test_uniform_prior_leaves_weights_unchanged():
    ps = _particles([[0, 0], [1, 0], [2, 0], [3, 0]], [0.1, 0.2, 0.3, 0.4])
    ps = weight_update(ps, UniformPrior(Bounds(0.0, 0.0, 3.0, 0.0)))
    np.testing.assert_allclose(ps.weights, [0.1, 0.2, 0.3, 0.4])


def test_gaussian_reweight_favours_the_closer_particle():
    ps = gaussian_reweight(_particles([[0, 0], [2, 0]], [0.5, 0.5]), np.array([0.0, 0.0]), 1.0)
    assert ps.weights[1] / ps.weights[0] == pytest.approx(math.exp(-2.0))
    far = gaussian_reweight(_particles([[0, 0], [2, 0]], [0.5, 0.5]), np.array([1e6, 0.0]), 1e-6)
    assert far.weights.sum() == pytest.approx(1.0)


def test_estimate_reference_values():
    result = estimate(_particles([[0, 0], [2, 0]], [0.5, 0.5]))
    assert (result.location.x, result.location.y) == pytest.approx((1.0, 0.0))
    assert result.spread == pytest.approx(1.0)
    assert result.n_eff == pytest.approx(2.0)


def test_init_filter_from_prior_and_from_hint():
    prior = UniformPrior(Bounds(0.0, 0.0, 20.0, 10.0))
    ps = init_filter(prior, 400, seed=1)
    assert len(ps) == 400
    assert ps.weights.sum() == pytest.approx(1.0)
    np.testing.assert_array_equal(ps.states[:, 3], 1.0)
    assert np.all((ps.states[:, 2] > -math.pi) & (ps.states[:, 2] <= math.pi))
    again = init_filter(prior, 400, seed=1)
    np.testing.assert_array_equal(ps.states, again.states)

    hinted = init_filter(prior, 50, seed=1, hint=GaussianLocation(Location(5.0, 5.0), 1e-6))
    np.testing.assert_allclose(hinted.positions, np.tile([5.0, 5.0], (50, 1)), atol=1e-4)
    with pytest.raises(ValueError):
        init_filter(prior, 0, seed=1)


def test_particle_views_round_trip_through_the_set():
    particles = _particles([[0, 0], [1, 2]], [0.25, 0.75])
    rebuilt = ParticleSet.from_particles([particles.particle(i) for i in range(len(particles))])
    np.testing.assert_array_equal(rebuilt.states, particles.states)
    np.testing.assert_array_equal(rebuilt.weights, particles.weights)
    np.testing.assert_array_equal(rebuilt.covs, particles.covs)
