# pyright: reportMissingParameterType=false
# pyright: reportUnknownParameterType=false
from __future__ import annotations

import math

import numpy as np
import pytest

from proprio_fusion import const, exceptions
from proprio_fusion.config import BendNoiseModel, ImuNoiseModel
from proprio_fusion.kalman import (
    FilterConfigs,
    KalmanConfig,
    KalmanFilter,
    KalmanState,
    default_configs,
    fuse_coordinates,
    fuse_orientation,
    initial_state,
    predict,
    run_filter,
    steady_state,
    structural_config,
    update,
)


def _scalar_config(h, r, q=1e-3, p0=1.0):
    return KalmanConfig(
        A=[[1.0]],
        B=[[0.0]],
        H=np.asarray(h, dtype=float).reshape(2, 1),
        Q=[[q]],
        R=np.diag(r),
        P0=[[p0]],
    )


def test_scalar_posterior_matches_information_form():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        h = rng.uniform(0.2, 2.0, size=2) * rng.choice([-1.0, 1.0], size=2)
        r = 10.0 ** rng.uniform(-3.0, 1.0, size=2)
        p = 10.0 ** rng.uniform(-3.0, 1.0)
        x = rng.normal()
        z = rng.normal(size=2)
        config = _scalar_config(h, r)
        state = KalmanState(x_hat=np.array([x]), P=np.array([[p]]))

        posterior = update(state, config, z)

        information = 1.0 / p + np.sum(h**2 / r)
        assert posterior.P[0, 0] == pytest.approx(1.0 / information, rel=1e-9)
        expected = (x / p + np.sum(h * z / r)) / information
        assert posterior.x_hat[0] == pytest.approx(expected, rel=1e-8, abs=1e-12)
        assert posterior.k == state.k


def test_predict():
    config = KalmanConfig(
        A=[[1.0, 0.1], [0.0, 1.0]],
        B=[[0.0], [1.0]],
        H=np.vstack([np.eye(2), np.eye(2)]),
        Q=np.diag([0.01, 0.02]),
        R=np.eye(4),
        P0=np.eye(2),
    )
    state = predict(initial_state(config, [1.0, 2.0]), config)
    np.testing.assert_allclose(state.x_hat, [1.2, 2.0])
    np.testing.assert_allclose(state.P, [[1.02, 0.1], [0.1, 1.02]])
    assert state.k == 1

    pushed = predict(initial_state(config, [1.0, 2.0]), config, u=[0.5])
    np.testing.assert_allclose(pushed.x_hat, [1.2, 2.5])
    with pytest.raises(exceptions.DimensionError):
        predict(initial_state(config), config, u=[0.5, 0.5])


def test_steady_state_matches_scalar_riccati():
    q, r_bend, r_imu = 1e-3, 2e-4, 8e-4
    steady = steady_state(structural_config(1, q, r_bend, r_imu))

    r = 1.0 / (1.0 / r_bend + 1.0 / r_imu)
    prior = 0.5 * (q + math.sqrt(q**2 + 4.0 * q * r))
    posterior = prior - q
    assert steady.covariance[0, 0] == pytest.approx(posterior, rel=1e-8)
    np.testing.assert_allclose(
        steady.gain, [[posterior / r_bend, posterior / r_imu]], rtol=1e-8
    )
    assert steady.iterations > 1


def test_gain_weights_the_better_sensor():
    steady = steady_state(structural_config(1, 1e-4, 1e-4, 1e-2))
    bend_gain, imu_gain = steady.gain[0]
    assert bend_gain > imu_gain > 0
    assert bend_gain / imu_gain == pytest.approx(100.0)


def test_uninformative_measurement_leaves_state():
    config = structural_config(2, 1e-3, 1e12, 1e12)
    state = KalmanState(x_hat=np.array([0.3, -0.2]), P=1e-3 * np.eye(2))
    posterior = update(state, config, [5.0, 5.0, -5.0, -5.0])
    np.testing.assert_allclose(posterior.x_hat, state.x_hat, atol=1e-9)


def test_invalid_configs():
    with pytest.raises(exceptions.DimensionError):
        KalmanConfig(
            A=[[1.0]], B=[[0.0]], H=np.ones((3, 1)), Q=[[1.0]], R=np.eye(2), P0=[[1.0]]
        )
    with pytest.raises(exceptions.DimensionError):
        KalmanConfig(
            A=np.eye(2), B=[[0.0]], H=np.ones((4, 2)), Q=np.eye(2), R=np.eye(4), P0=np.eye(2)
        )
    with pytest.raises(exceptions.InvalidInputError):
        KalmanConfig(
            A=np.eye(2),
            B=np.zeros((2, 2)),
            H=np.ones((4, 2)),
            Q=[[1.0, 0.5], [0.0, 1.0]],
            R=np.eye(4),
            P0=np.eye(2),
        )
    with pytest.raises(exceptions.InvalidInputError):
        _scalar_config([1.0, 1.0], [1.0, 1.0], q=-1.0)
    with pytest.raises(exceptions.InvalidInputError):
        _scalar_config([1.0, 1.0], [0.0, 0.0])
    with pytest.raises(exceptions.InvalidInputError):
        _scalar_config([1.0, math.nan], [1.0, 1.0])


def test_update_dimension_errors():
    config = structural_config(2, 1e-3, 1e-2, 1e-2)
    with pytest.raises(exceptions.DimensionError):
        update(initial_state(config), config, [0.0, 0.0, 0.0])
    with pytest.raises(exceptions.DimensionError):
        update(KalmanState(x_hat=np.zeros(3), P=np.eye(3)), config, np.zeros(4))


def test_fuse_orientation():
    config = structural_config(3, 1e-3, 1e-4, 1e-4)
    state = initial_state(config)
    fused, state = fuse_orientation([0.1, 0.2, 0.3], [0.1, 0.2, 0.3], state, config)
    assert fused.shape == (3,)
    assert state.k == 1
    # both sensors agree: the estimate moves almost all the way to them
    np.testing.assert_allclose(fused, [0.1, 0.2, 0.3], rtol=0.1)

    with pytest.raises(exceptions.DimensionError) as info:
        fuse_orientation([0.1, 0.2], [0.1, 0.2], state, config)
    assert info.value.stage == "kf_orient"
    assert str(info.value).startswith("[kf_orient]")


def test_fuse_coordinates():
    config = structural_config(4, 1.0, 1e-2, 1e-2)
    points = np.array([[1.0, 2.0], [3.0, 4.0]])
    fused, state = fuse_coordinates(points, points, initial_state(config, points.ravel()), config)
    assert fused.shape == (2, 2)
    np.testing.assert_allclose(fused, points)
    assert state.x_hat.shape == (4,)


def test_run_filter_matches_stepping():
    rng = np.random.default_rng(1)
    config = structural_config(3, [1e-3, 2e-3, 5e-4], [1e-4, 2e-4, 3e-4], [4e-4, 1e-3, 2e-3])
    Z = rng.normal(size=(500, 6))  # noqa: N806
    kalman = KalmanFilter(config)
    stepped = np.array([kalman.step(z) for z in Z])
    np.testing.assert_allclose(run_filter(config, Z), stepped, atol=1e-10)


def test_run_filter_matches_stepping_with_coupled_states():
    rng = np.random.default_rng(2)
    config = KalmanConfig(
        A=[[0.9, 0.1], [0.0, 0.95]],
        B=np.zeros((2, 1)),
        H=rng.normal(size=(4, 2)),
        Q=np.diag([1e-2, 2e-2]),
        R=np.diag([0.1, 0.2, 0.3, 0.4]),
        P0=np.eye(2),
    )
    Z = rng.normal(size=(300, 4))  # noqa: N806
    kalman = KalmanFilter(config, x0=[0.0, 0.0])
    stepped = np.array([kalman.step(z) for z in Z])
    np.testing.assert_allclose(run_filter(config, Z, x0=[0.0, 0.0]), stepped, atol=1e-10)


def test_filter_reset():
    config = structural_config(1, 1e-3, 1e-2, 1e-2)
    kalman = KalmanFilter(config)
    first = kalman.step([1.0, 1.0])
    kalman.step([2.0, 0.0])
    kalman.reset()
    assert kalman.state is None
    np.testing.assert_allclose(kalman.step([1.0, 1.0]), first)


def test_run_filter_rejects_wrong_width():
    with pytest.raises(exceptions.DimensionError):
        run_filter(structural_config(2, 1e-3, 1e-2, 1e-2), np.zeros((10, 3)))


def test_config_dict_round_trip():
    config = structural_config(2, [1e-3, 2e-3], [1e-4, 2e-4], [3e-4, 4e-4])
    restored = KalmanConfig.from_dict(config.to_dict())
    for name in ("A", "B", "H", "Q", "R", "P0"):
        np.testing.assert_array_equal(getattr(restored, name), getattr(config, name))

    data = config.to_dict()
    data["n"] = 3
    with pytest.raises(exceptions.ConfigError):
        KalmanConfig.from_dict(data)
    with pytest.raises(exceptions.ConfigError):
        KalmanConfig.from_dict({"A": {"shape": [1, 1]}})


def test_matrices_are_read_only():
    config = structural_config(1, 1e-3, 1e-2, 1e-2)
    with pytest.raises(ValueError, match="read-only"):
        config.Q[0, 0] = 1.0


def test_filter_configs_save_load(tmp_path, filter_configs):
    path = filter_configs.save(tmp_path / "filter_configs.json")
    restored = FilterConfigs.load(path)
    assert restored.meta == filter_configs.meta
    np.testing.assert_array_equal(restored.orientation.R, filter_configs.orientation.R)
    np.testing.assert_array_equal(restored.coordinate.Q, filter_configs.coordinate.Q)

    with pytest.raises(exceptions.ConfigError):
        FilterConfigs.load(tmp_path / "missing.json")


def test_filter_configs_dimensions():
    with pytest.raises(exceptions.DimensionError):
        FilterConfigs(
            orientation=structural_config(2, 1e-3, 1e-2, 1e-2),
            coordinate=structural_config(3, 1e-3, 1e-2, 1e-2),
        )


def test_default_configs(geoms, filter_configs):
    assert filter_configs.n_segments == len(geoms)
    assert filter_configs.coordinate.n == 2 * len(geoms)
    r = np.diag(filter_configs.orientation.R)
    assert np.all(r > 0)
    np.testing.assert_array_equal(np.diag(filter_configs.orientation.P0), r[: len(geoms)])


def test_noiseless_configs_trust_the_bend_sensors(geoms):
    configs = default_configs(geoms, ImuNoiseModel.noiseless(), BendNoiseModel.noiseless())
    r = np.diag(configs.orientation.R)
    np.testing.assert_allclose(r[: len(geoms)], const.VARIANCE_FLOOR)
    assert np.all(r[len(geoms) :] > r[: len(geoms)])


def test_default_configs_calibration_mismatch(geoms, calibration):
    with pytest.raises(exceptions.InvalidInputError):
        default_configs(geoms[:2], ImuNoiseModel(), BendNoiseModel(), calibration)
