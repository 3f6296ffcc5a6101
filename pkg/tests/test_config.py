# pyright: reportMissingParameterType=false
# pyright: reportUnknownParameterType=false
from __future__ import annotations

import json

import pytest

from proprio_fusion import exceptions
from proprio_fusion.config import (
    CorrectorSettings,
    ImuNoiseModel,
    RunConfig,
    TunerSpec,
    load_config,
)
from proprio_fusion.kinematics import save_geometry
from proprio_fusion.types import SegmentGeometry

from .conftest import short_config_dict


def test_defaults():
    config = load_config()
    assert config.n_segments == 6
    assert config.sample_rate == 10.0
    assert config.tuner == TunerSpec()
    assert config.corrector == CorrectorSettings()


def test_dict_round_trip(short_config):
    restored = RunConfig.from_dict(short_config.to_dict())
    assert restored.digest() == short_config.digest()
    assert restored.tuner.filters == ("orientation", "coordinate")
    assert restored.corrector.window_size == 50


def test_digest_follows_content(short_config):
    assert short_config.with_overrides(seed=8).digest() != short_config.digest()
    assert short_config.with_overrides(seed=None).digest() == short_config.digest()


def test_load_config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(short_config_dict()), encoding="utf-8")
    config = load_config(path, seed=21)
    assert config.seed == 21
    assert config.training_duration == 90.0
    assert config.tuner.max_iters == 2
    assert load_config(path, seed=None).seed == 7


def test_geometry_file_is_resolved_next_to_config(tmp_path):
    geoms = (
        SegmentGeometry(index=1, arc_length=50.0, offset_length=5.0),
        SegmentGeometry(index=2, arc_length=60.0),
    )
    save_geometry(geoms, tmp_path / "arm.json")
    path = tmp_path / "config.json"
    path.write_text(
        json.dumps({"geometry_file": "arm.json", "contact": {"segment": 2}}),
        encoding="utf-8",
    )
    config = load_config(path)
    assert config.geometry == geoms
    assert config.geometry_file == tmp_path / "arm.json"


@pytest.mark.parametrize(
    "data",
    [
        {"colour": "red"},
        {"imu": {"gain": 1.0}},
        {"scenario_duration": 0.0},
        {"corrector": {"window_size": 0}},
        {"imu": {"yaw_white_noise_std": -1.0}},
        {"contact": {"segment": 9}},
        {"geometry_file": "missing.json"},
        {"geometry": {"segments": []}},
    ],
)
def test_invalid_config(tmp_path, data):
    with pytest.raises(exceptions.ConfigError):
        RunConfig.from_dict(data, base_dir=tmp_path)


def test_unreadable_config(tmp_path):
    with pytest.raises(exceptions.ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "list.json").write_text("[]", encoding="utf-8")
    with pytest.raises(exceptions.ConfigError):
        load_config(tmp_path / "list.json")


def test_noiseless_models():
    imu = ImuNoiseModel.noiseless()
    assert imu.yaw_white_noise_std == imu.drift_rate_std == imu.bias_rate == 0.0
    assert imu.bias_rate_spread == 0.0
