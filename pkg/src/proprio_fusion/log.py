# pyright: reportMissingImports=false
"""Package logging: every record carries the pipeline stage it was emitted in.

`log_stage` names the running stage (`calibration`, `tuning`, ...); nested
stages join with `/`. Work handed to a thread pool through `submit_in_stage`
keeps the stage of the caller.
"""

from __future__ import annotations

import logging
import sys
from contextlib import contextmanager
from contextvars import ContextVar, copy_context
from datetime import datetime, timedelta, timezone
from functools import lru_cache
from logging.config import dictConfig
from pathlib import Path
from time import perf_counter
from typing import TYPE_CHECKING, Any, Literal, TypeVar

from typing_extensions import ParamSpec, override

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

if TYPE_CHECKING:
    from collections.abc import Callable, Iterator
    from concurrent.futures import Executor, Future

__all__ = [
    "Formatter",
    "get_logger",
    "set_level",
    "log_stage",
    "current_stage",
    "submit_in_stage",
]

_LOG_TOML = Path(__file__).with_suffix(".toml")
_NO_STAGE = "-"

_UTC = timezone(timedelta(0), "UTC")
_LTC = datetime.now(_UTC).astimezone().tzinfo or _UTC

_stage: ContextVar[str] = ContextVar("proprio_fusion_stage", default=_NO_STAGE)

_P = ParamSpec("_P")
_T = TypeVar("_T")


class Formatter(logging.Formatter):
    """Formatter that fills `%(stage)s` and can print ISO timestamps."""

    def __init__(
        self,
        fmt: str | None = None,
        datefmt: str | None = None,
        style: Literal["%", "{", "$"] = "%",
        validate: bool = True,  # noqa: FBT001
        *,
        use_isoformat: bool = False,
        use_local_timezone: bool = False,
    ) -> None:
        super().__init__(fmt, datefmt, style, validate)
        self._use_isoformat = use_isoformat
        self._timezone = _LTC if use_local_timezone else _UTC

    @override
    def format(self, record: logging.LogRecord) -> str:
        record.__dict__.setdefault("stage", _stage.get())
        return super().format(record)

    @override
    def formatTime(self, record: logging.LogRecord, datefmt: str | None = None) -> str:
        if not self._use_isoformat:
            return super().formatTime(record, datefmt)
        return datetime.fromtimestamp(record.created, self._timezone).isoformat()


def get_logger(name: str | None = None) -> logging.Logger:
    """The package logger, or its child `proprio_fusion.<name>`."""
    _setup_config()
    default = _load_config()["default"]
    return logging.getLogger(default if name is None else f"{default}.{name}")


def set_level(level: int | str) -> None:
    """Change the level of the package logger and its handlers.

    Child loggers with a level of their own in `log.toml` keep it.

    Args:
        level: a `logging` level number or name, e.g. `"DEBUG"`.
    """
    if isinstance(level, str):
        level = level.upper()
    logger = get_logger()
    logger.setLevel(level)
    for handler in logger.handlers:
        handler.setLevel(level)


def current_stage() -> str:
    return _stage.get()


@contextmanager
def log_stage(stage: str, /, **fields: Any) -> Iterator[None]:
    """Run a pipeline stage: tag its records and log start, end and elapsed time."""
    outer = _stage.get()
    token = _stage.set(stage if outer == _NO_STAGE else f"{outer}/{stage}")
    logger = get_logger("pipeline")
    detail = " ".join(f"{key}={value}" for key, value in sorted(fields.items()))
    logger.info("started %s", detail)
    started = perf_counter()
    try:
        yield
    except Exception:
        logger.error("failed after %.2fs", perf_counter() - started)
        raise
    else:
        logger.info("finished in %.2fs", perf_counter() - started)
    finally:
        _stage.reset(token)


def submit_in_stage(
    pool: Executor, fn: Callable[_P, _T], /, *args: _P.args, **kwargs: _P.kwargs
) -> Future[_T]:
    """`pool.submit` that runs `fn` under the stage of the caller."""
    return pool.submit(copy_context().run, fn, *args, **kwargs)


@lru_cache
def _load_config() -> dict[str, Any]:
    with _LOG_TOML.open("rb") as f:
        return tomllib.load(f)


@lru_cache
def _setup_config() -> None:
    dictConfig(_load_config()["config"])
