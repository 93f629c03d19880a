import math

import numpy as np
import pytest

from src.fusion.filters import FilterConfig
from src.fusion.measurement import MeasurementModel, kalman_correct, kalman_correct_batch, kalman_gain
from src.fusion.motion import jacobians, motion, predict, predict_particles
from src.fusion.types import Particle, ProcessNoise, wrap_angle
from src.radio.errors import SingularInnovationError
from src.radio.types import GaussianLocation, Location
from src.simulation.trajectory import OdometryStep


def _random_states(n, seed=0):
    rng = np.random.default_rng(seed)
    return np.column_stack(
        [
            rng.uniform(-10, 10, n),
            rng.uniform(-10, 10, n),
            rng.uniform(-2.5, 2.5, n),
            rng.uniform(0.5, 1.5, n),
        ]
    )


def _random_covs(n, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, 4, 4))
    return A @ np.swapaxes(A, 1, 2) + 0.1 * np.eye(4)


def test_motion_rotates_and_scales_the_step():
    out = motion(np.array([[0.0, 0.0, 0.0, 1.0]]), np.array([1.0, 0.0]))
    np.testing.assert_allclose(out, [[1.0, 0.0, 0.0, 1.0]])
    out = motion(np.array([[0.0, 0.0, math.pi / 2, 2.0]]), np.array([1.0, 0.0]))
    np.testing.assert_allclose(out[0, :2], [0.0, 2.0], atol=1e-12)
    assert out[0, 3] == 2.0


def test_heading_stays_wrapped_and_scale_stays_positive():
    state = np.array([[0.0, 0.0, 3.1, 0.002]])
    out = motion(state, np.array([0.1, 0.0]), noise=np.array([[0.0, 0.1, -1.0]]))
    assert -math.pi < out[0, 2] <= math.pi
    assert out[0, 2] == pytest.approx(3.2 - 2 * math.pi)
    assert out[0, 3] > 0
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)


def test_jacobians_match_finite_differences():
    states = _random_states(100)
    odo = np.array([0.12, -0.03])
    F, N = jacobians(states, odo)
    h = 1e-6
    for i in range(4):
        step = np.zeros(4)
        step[i] = h
        numeric = (motion(states + step, odo) - motion(states - step, odo)) / (2 * h)
        np.testing.assert_allclose(F[:, :, i], numeric, atol=1e-6)
    for i in range(3):
        noise = np.zeros((len(states), 3))
        noise[:, i] = h
        numeric = (motion(states, odo, noise) - motion(states, odo, -noise)) / (2 * h)
        np.testing.assert_allclose(N[:, :, i], numeric, atol=1e-6)


def test_noise_free_prediction_propagates_covariance():
    noise = ProcessNoise(n_p=0.1, n_r=0.05, n_v=1e-4)
    states, covs = _random_states(10), _random_covs(10)
    odo = np.array([0.1, 0.02])
    moved, propagated = predict_particles(states, covs, odo, noise, rng=None, dt=1.0)
    np.testing.assert_allclose(moved, motion(states, odo))
    F, N = jacobians(states, odo)
    expected = F @ covs @ np.swapaxes(F, 1, 2) + N @ noise.Q @ np.swapaxes(N, 1, 2)
    np.testing.assert_allclose(propagated, expected, rtol=1e-12, atol=1e-12)


def test_process_noise_scales_with_interval():
    noise = ProcessNoise(n_p=0.1, n_r=0.05, n_v=1e-4)
    np.testing.assert_allclose(np.diag(noise.for_interval(0.1, 1.0)), [0.1, 0.005, 1e-5])
    with pytest.raises(ValueError):
        ProcessNoise(n_p=-1.0, n_r=0.0)


def test_predict_keeps_covariance_symmetric_and_psd():
    noise = ProcessNoise(n_p=0.1, n_r=0.05)
    p = Particle(np.array([0.0, 0.0, 0.3, 1.0]), 1.0, np.diag([4.0, 4.0, 0.5, 0.01]))
    rng = np.random.default_rng(0)
    for k in range(500):
        p = predict(p, OdometryStep(0.1, 0.01, 0.1 * k), noise, rng, dt=0.1)
    np.testing.assert_array_equal(p.P, p.P.T)
    assert np.linalg.eigvalsh(p.P).min() >= -1e-12


def test_kalman_gain_and_correction_reference():
    K = kalman_gain(np.eye(4), np.eye(2))
    np.testing.assert_allclose(K, [[0.5, 0.0], [0.0, 0.5], [0.0, 0.0], [0.0, 0.0]])
    states, covs = kalman_correct_batch(
        np.array([[0.0, 0.0, 0.0, 1.0]]),
        np.eye(4)[None, :, :],
        np.array([2.0, 4.0]),
        np.eye(2),
    )
    np.testing.assert_allclose(states[0], [1.0, 2.0, 0.0, 1.0])
    np.testing.assert_allclose(covs[0], np.diag([0.5, 0.5, 1.0, 1.0]))


def test_correction_never_increases_trace():
    states, covs = _random_states(50, seed=1), _random_covs(50, seed=1)
    R = np.array([[2.0, 0.3], [0.3, 1.0]])
    _, corrected = kalman_correct_batch(states, covs, np.array([1.0, -1.0]), R)
    assert np.all(np.trace(corrected, axis1=1, axis2=2) <= np.trace(covs, axis1=1, axis2=2) + 1e-12)
    np.testing.assert_array_equal(corrected, np.swapaxes(corrected, 1, 2))
    assert np.linalg.eigvalsh(corrected).min() >= -1e-10


def test_singular_innovation_raises():
    with pytest.raises(SingularInnovationError):
        kalman_correct_batch(np.array([[0.0, 0.0, 0.0, 1.0]]), np.zeros((1, 4, 4)), np.array([1.0, 1.0]), np.zeros((2, 2)))


def test_diagonal_correction_follows_the_scalar_recurrence():
    mm = MeasurementModel(gamma=1.0, sigma_reference=1.0)
    p = Particle(np.array([0.0, 0.0, 0.0, 1.0]), 1.0, np.diag([4.0, 4.0, 0.5, 0.01]))
    x, var = 0.0, 4.0
    for k, z in enumerate([1.0, 3.0, 2.0, 2.5, 1.5]):
        sigma = 0.5 + 0.25 * k
        p = kalman_correct(p, GaussianLocation(Location(z, 0.0), sigma), mm)
        r = sigma**2
        gain = var / (var + r)
        x, var = x + gain * (z - x), var * r / (var + r)
        assert p.s[0] == pytest.approx(x, abs=1e-9)
        assert p.P[0, 0] == pytest.approx(var, abs=1e-9)
    assert p.P[2, 2] == 0.5
    assert p.s[2] == 0.0


def test_measurement_covariance_scales_with_sigma():
    mm = MeasurementModel(gamma=150.0, sigma_reference=10.0)
    np.testing.assert_allclose(mm.R(10.0), 150.0 * np.eye(2))
    assert mm.variance(5.0) == pytest.approx(37.5)
    with pytest.raises(ValueError):
        MeasurementModel(gamma=0.0)


def test_default_measurement_covariance_is_gamma_sigma_squared():
    expected = 150.0 * np.eye(2)
    np.testing.assert_allclose(FilterConfig().measurement_model.R(1.0), expected)
    np.testing.assert_allclose(FilterConfig.from_mapping({}).measurement_model.R(1.0), expected)
    np.testing.assert_allclose(MeasurementModel().R(2.0), 4.0 * expected)
    assert FilterConfig.from_mapping({"gamma": 100.0}).measurement_model.variance(3.0) == pytest.approx(900.0)
