from __future__ import annotations

import hashlib
import json
from contextlib import contextmanager
from typing import TYPE_CHECKING, Any

import numpy as np

from proprio_fusion import exceptions

if TYPE_CHECKING:
    from collections.abc import Iterator, Mapping, Sequence

    from numpy.typing import ArrayLike, NDArray

__all__ = [
    "tag_stage",
    "spawn_generators",
    "derive_seed",
    "wrap_angle",
    "as_finite_array",
    "canonical_json",
    "config_hash",
]

_NUMERIC_ERRORS = (np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError)


@contextmanager
def tag_stage(stage: str) -> Iterator[None]:
    """Attach `stage` to errors escaping the block.

    Package errors keep their type and get their `stage` set (an inner stage
    wins). Foreign numerical errors are translated into `NumericalError`.
    Usable as a context manager and as a decorator.
    """
    try:
        yield
    except exceptions.Error as exc:
        if exc.stage is None:
            exc.stage = stage
        raise
    except _NUMERIC_ERRORS as exc:
        error = exceptions.NumericalError(
            str(exc) or type(exc).__name__, diagnostics={"cause": type(exc).__name__}
        )
        error.stage = stage
        raise error.with_traceback(exc.__traceback__) from exc


def spawn_generators(
    seed: int | Sequence[int], names: Sequence[str]
) -> dict[str, np.random.Generator]:
    """Independent random streams, one per name, derived from one seed.

    The streams are children of a single `SeedSequence`, so the samples drawn
    from one stream never depend on how many samples another stream consumed.
    """
    sequence = np.random.SeedSequence(seed)
    children = sequence.spawn(len(names))
    return {
        name: np.random.default_rng(child)
        for name, child in zip(names, children)
    }


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 32 bit child seed for `(seed, *keys)`."""
    state = np.random.SeedSequence([seed, *keys]).generate_state(1)
    return int(state[0])


def wrap_angle(angle: ArrayLike) -> NDArray[np.float64]:
    """Wrap angles (rad) into (-pi, pi]."""
    values = np.asarray(angle, dtype=np.float64)
    return np.pi - np.mod(np.pi - values, 2.0 * np.pi)


def as_finite_array(
    values: ArrayLike, name: str, *, ndim: int | None = None
) -> NDArray[np.float64]:
    try:
        array = np.asarray(values, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        error_msg = f"{name} is not numeric: {exc}"
        raise exceptions.InvalidInputError(error_msg) from exc

    if ndim is not None and array.ndim != ndim:
        error_msg = f"{name} must have {ndim} dimension(s), got shape {array.shape}"
        raise exceptions.DimensionError(error_msg)
    if not np.all(np.isfinite(array)):
        error_msg = f"{name} contains non-finite values"
        raise exceptions.InvalidInputError(error_msg)
    return array


def canonical_json(payload: Mapping[str, Any]) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def config_hash(payload: Mapping[str, Any]) -> str:
    """SHA-256 of the canonical JSON dump of `payload`."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
