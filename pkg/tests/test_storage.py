# pyright: reportMissingParameterType=false
# pyright: reportUnknownParameterType=false
from __future__ import annotations

import numpy as np
import pytest

from proprio_fusion import exceptions
from proprio_fusion.storage import (
    file_digest,
    load_run,
    read_json,
    run_paths,
    save_run,
    sensors_frame,
    write_json,
)


def test_run_paths(tmp_path):
    expected = (
        tmp_path / "run.sensors.csv",
        tmp_path / "run.gt.csv",
        tmp_path / "run.meta.json",
    )
    assert run_paths(tmp_path / "run") == expected
    assert run_paths(tmp_path / "run.sensors.csv") == expected
    assert run_paths(str(tmp_path / "run.meta.json")) == expected


def test_save_load_run(tmp_path, sweep_run):
    paths = save_run(sweep_run, tmp_path / "runs" / "sweep")
    assert all(path.is_file() for path in paths)

    loaded = load_run(paths[0])
    assert loaded.spec == sweep_run.spec
    assert loaded.geometry == sweep_run.geometry
    assert loaded.characteristics == sweep_run.characteristics
    assert loaded.imu_model == sweep_run.imu_model
    assert loaded.bend_model == sweep_run.bend_model

    tolerance = {"rtol": 1e-10, "atol": 1e-9}
    np.testing.assert_allclose(loaded.sensors.t, sweep_run.sensors.t, **tolerance)
    np.testing.assert_allclose(loaded.sensors.imu_yaw, sweep_run.sensors.imu_yaw, **tolerance)
    np.testing.assert_allclose(
        loaded.sensors.bend_voltages, sweep_run.sensors.bend_voltages, **tolerance
    )
    np.testing.assert_array_equal(
        loaded.sensors.bend_out_of_range, sweep_run.sensors.bend_out_of_range
    )

    truth, original = loaded.ground_truth, sweep_run.ground_truth
    np.testing.assert_allclose(truth.thetas, original.thetas, **tolerance)
    np.testing.assert_allclose(truth.world_points, original.world_points, **tolerance)
    np.testing.assert_allclose(truth.local_points, original.local_points, **tolerance)
    np.testing.assert_array_equal(truth.pcc_violation, original.pcc_violation)
    np.testing.assert_array_equal(truth.contact, original.contact)


def test_saving_is_deterministic(tmp_path, sweep_run):
    first = save_run(sweep_run, tmp_path / "a")
    second = save_run(sweep_run, tmp_path / "b")
    assert [file_digest(path) for path in first] == [file_digest(path) for path in second]


def test_sensor_columns(tmp_path, sweep_run):
    sensors = sweep_run.sensors
    labels = range(1, sensors.n_segments + 1)
    expected = [
        "t",
        *(f"imu_yaw_{i}" for i in labels),
        *(f"bendA_v_{i}" for i in labels),
        *(f"bendB_v_{i}" for i in labels),
        *(f"bendA_oor_{i}" for i in labels),
        *(f"bendB_oor_{i}" for i in labels),
    ]
    frame = sensors_frame(sensors)
    assert list(frame.columns) == expected
    np.testing.assert_array_equal(frame["bendA_v_2"], sensors.bend_voltages[:, 1, 0])
    np.testing.assert_array_equal(frame["bendB_v_2"], sensors.bend_voltages[:, 1, 1])

    header = save_run(sweep_run, tmp_path / "run")[0].read_text().splitlines()[0]
    assert header.split(",") == expected


def test_missing_run(tmp_path):
    with pytest.raises(exceptions.ConfigError):
        load_run(tmp_path / "nothing")


def test_broken_metadata(tmp_path, sweep_run):
    paths = save_run(sweep_run, tmp_path / "run")
    write_json(paths[2], {"scenario": {}})
    with pytest.raises(exceptions.ConfigError):
        load_run(tmp_path / "run")


def test_read_json(tmp_path):
    path = write_json(tmp_path / "data.json", {"b": 1, "a": [1.5, 2]})
    assert read_json(path) == {"a": [1.5, 2], "b": 1}
    assert path.read_text(encoding="utf-8").startswith('{\n  "a"')

    (tmp_path / "list.json").write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(exceptions.ConfigError):
        read_json(tmp_path / "list.json")
    (tmp_path / "bad.json").write_text("{", encoding="utf-8")
    with pytest.raises(exceptions.ConfigError):
        read_json(tmp_path / "bad.json")
