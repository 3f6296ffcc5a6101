# pyright: reportMissingParameterType=false
# pyright: reportUnknownParameterType=false
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import pytest

from proprio_fusion.log import (
    Formatter,
    current_stage,
    get_logger,
    log_stage,
    set_level,
    submit_in_stage,
)


class _Collect(logging.Handler):
    def __init__(self) -> None:
        super().__init__()
        self.lines: list[str] = []
        self.setFormatter(Formatter("[%(stage)s] %(name)s: %(message)s"))

    def emit(self, record):
        self.lines.append(self.format(record))


@pytest.fixture
def collected():
    handler = _Collect()
    logger = get_logger()
    logger.addHandler(handler)
    try:
        yield handler.lines
    finally:
        logger.removeHandler(handler)


def test_records_carry_the_stage(collected):
    with log_stage("calibration", seed=3):
        get_logger("calibration").info("fitted")
    get_logger().info("idle")

    assert collected[0] == "[calibration] proprio_fusion.pipeline: started seed=3"
    assert "[calibration] proprio_fusion.calibration: fitted" in collected
    assert collected[-2].startswith("[calibration] proprio_fusion.pipeline: finished in")
    assert collected[-1] == "[-] proprio_fusion: idle"


def test_nested_stages_join():
    with log_stage("reproduce"), log_stage("tuning"):
        assert current_stage() == "reproduce/tuning"
    assert current_stage() == "-"


def test_failed_stage_is_logged_and_reset(collected):
    with pytest.raises(RuntimeError), log_stage("evaluation"):
        raise RuntimeError
    assert collected[-1].startswith("[evaluation] proprio_fusion.pipeline: failed after")
    assert current_stage() == "-"


def test_pool_workers_keep_the_stage():
    with ThreadPoolExecutor(max_workers=2) as pool, log_stage("tuning"):
        futures = [submit_in_stage(pool, current_stage) for _ in range(4)]
        stages = {future.result() for future in futures}
    assert stages == {"tuning"}


def test_set_level_keeps_the_drift_logger_quiet():
    try:
        set_level("debug")
        assert get_logger().level == logging.DEBUG
        assert get_logger("drift").level == logging.INFO
        assert not get_logger("drift").isEnabledFor(logging.DEBUG)
        assert get_logger("tuner").isEnabledFor(logging.DEBUG)
    finally:
        set_level("INFO")


def test_formatter_isoformat():
    formatter = Formatter("%(asctime)s", use_isoformat=True)
    record = logging.LogRecord("proprio_fusion", logging.INFO, __file__, 1, "x", None, None)
    assert "T" in formatter.format(record)
