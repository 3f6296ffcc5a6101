"""Piecewise-constant-curvature kinematics of a planar segmented arm.

Every segment is a circular arc of fixed length followed by a rigid connector.
A bend angle `theta` is the tangent rotation accumulated along the arc;
positive angles bend toward +x of the segment frame, whose +y axis is the
tangent at the segment base.

Scalar functions operate on one segment or one pose and return
`PlanarPoint`/`PlanarRotation`; the plural functions take `(..., N)` angle
arrays and are what the estimators use on whole logs.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from proprio_fusion import const, exceptions
from proprio_fusion.types import PlanarPoint, PlanarRotation, SegmentGeometry

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence
    from os import PathLike

    from numpy.typing import ArrayLike, NDArray

__all__ = [
    "curvature_endpoint",
    "offset_endpoint",
    "segment_endpoint",
    "segment_rotation",
    "chain_to_world",
    "non_uniform_segment_endpoint",
    "curvature_endpoints",
    "segment_endpoints",
    "non_uniform_segment_endpoints",
    "compose_world",
    "total_length",
    "default_geometry",
    "load_geometry",
    "save_geometry",
    "geometry_from_dict",
    "geometry_to_dict",
]


def _check_theta(theta: float) -> float:
    value = float(theta)
    if not math.isfinite(value):
        error_msg = f"bend angle must be finite, got {theta}"
        raise exceptions.InvalidInputError(error_msg)
    if abs(value) >= math.pi:
        error_msg = f"|bend angle| must be < pi, got {theta}"
        raise exceptions.InvalidInputError(error_msg)
    return value


def _check_thetas(thetas: ArrayLike) -> NDArray[np.float64]:
    values = np.asarray(thetas, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        error_msg = "bend angles must be finite"
        raise exceptions.InvalidInputError(error_msg)
    if np.any(np.abs(values) >= np.pi):
        error_msg = f"|bend angle| must be < pi, got max {np.max(np.abs(values))}"
        raise exceptions.InvalidInputError(error_msg)
    return values


def curvature_endpoints(
    arc_lengths: ArrayLike, thetas: ArrayLike
) -> NDArray[np.float64]:
    """Endpoint of constant-curvature arcs, broadcast over the inputs.

    Returns an array of shape `broadcast(arc_lengths, thetas).shape + (2,)`.
    Below `const.TAYLOR_THRESHOLD` the series expansion replaces
    `L / theta * (1 - cos theta, sin theta)`.
    """
    length = np.asarray(arc_lengths, dtype=np.float64)
    theta = _check_thetas(thetas)
    length, theta = np.broadcast_arrays(length, theta)

    small = np.abs(theta) < const.TAYLOR_THRESHOLD
    safe = np.where(small, 1.0, theta)
    radius = length / safe
    x = np.where(
        small,
        length * (theta / 2.0 - theta**3 / 24.0),
        radius * (1.0 - np.cos(theta)),
    )
    y = np.where(
        small,
        length * (1.0 - theta**2 / 6.0 + theta**4 / 120.0),
        radius * np.sin(theta),
    )
    return np.stack([x, y], axis=-1)


def _offset_endpoints(
    geoms: Sequence[SegmentGeometry], thetas: NDArray[np.float64]
) -> NDArray[np.float64]:
    offsets = np.array([geom.offset_length for geom in geoms], dtype=np.float64)
    follows = np.array([bool(geom.offset_follows_bend) for geom in geoms])
    effective = np.where(follows, thetas, 0.0)
    # row vector [d, 0] times R(theta)
    return np.stack([offsets * np.cos(effective), offsets * np.sin(effective)], axis=-1)


def _check_chain(geoms: Sequence[SegmentGeometry], thetas: NDArray[np.float64]) -> None:
    if not geoms:
        error_msg = "at least one segment is required"
        raise exceptions.InvalidInputError(error_msg)
    if thetas.ndim == 0 or thetas.shape[-1] != len(geoms):
        error_msg = (
            f"expected {len(geoms)} bend angle(s) per pose, got shape {thetas.shape}"
        )
        raise exceptions.InvalidInputError(error_msg)


def segment_endpoints(
    geoms: Sequence[SegmentGeometry], thetas: ArrayLike
) -> NDArray[np.float64]:
    """Local endpoints of every segment for `(..., N)` angles, shape `(..., N, 2)`."""
    values = _check_thetas(thetas)
    _check_chain(geoms, values)
    lengths = np.array([geom.arc_length for geom in geoms], dtype=np.float64)
    return curvature_endpoints(lengths, values) + _offset_endpoints(geoms, values)


def non_uniform_segment_endpoints(
    geoms: Sequence[SegmentGeometry],
    thetas_proximal: ArrayLike,
    thetas_distal: ArrayLike,
) -> NDArray[np.float64]:
    """Local endpoints when each arc is two equal-length arcs of different curvature.

    The total bend of a segment is `proximal + distal`; the connector follows
    the total bend. Equal halves reduce to `segment_endpoints`.
    """
    proximal = _check_thetas(thetas_proximal)
    distal = _check_thetas(thetas_distal)
    _check_chain(geoms, proximal)
    total = _check_thetas(proximal + distal)

    half = np.array([geom.arc_length for geom in geoms], dtype=np.float64) / 2.0
    first = curvature_endpoints(half, proximal)
    second = curvature_endpoints(half, distal)
    cos, sin = np.cos(proximal), np.sin(proximal)
    turned = np.stack(
        [cos * second[..., 0] + sin * second[..., 1],
         -sin * second[..., 0] + cos * second[..., 1]],
        axis=-1,
    )
    return first + turned + _offset_endpoints(geoms, total)


def compose_world(
    thetas: ArrayLike, local_points: ArrayLike
) -> NDArray[np.float64]:
    """World positions of every segment endpoint.

    `P_W^i = sum_{k<=i} R(theta_1 + ... + theta_{k-1}) @ P_S^k`; rotations
    are planar, so the prefix product is the rotation by the prefix sum.

    Args:
        thetas: `(..., N)` bend angles (rad).
        local_points: `(..., N, 2)` segment endpoints in their own frames.

    Returns:
        `(..., N, 2)` world-frame positions (mm).
    """
    angles = np.asarray(thetas, dtype=np.float64)
    local = np.asarray(local_points, dtype=np.float64)
    if local.shape != (*angles.shape, 2):
        error_msg = (
            f"local points {local.shape} do not match bend angles {angles.shape}"
        )
        raise exceptions.InvalidInputError(error_msg)

    heading = np.cumsum(angles, axis=-1) - angles
    cos, sin = np.cos(heading), np.sin(heading)
    x = cos * local[..., 0] + sin * local[..., 1]
    y = -sin * local[..., 0] + cos * local[..., 1]
    return np.cumsum(np.stack([x, y], axis=-1), axis=-2)


def curvature_endpoint(geom: SegmentGeometry, theta: float) -> PlanarPoint:
    value = _check_theta(theta)
    return PlanarPoint.from_array(curvature_endpoints(geom.arc_length, value))


def offset_endpoint(geom: SegmentGeometry, theta: float) -> PlanarPoint:
    value = _check_theta(theta)
    point = _offset_endpoints([geom], np.array([value]))[0]
    return PlanarPoint.from_array(point)


def segment_endpoint(geom: SegmentGeometry, theta: float) -> PlanarPoint:
    return curvature_endpoint(geom, theta) + offset_endpoint(geom, theta)


def non_uniform_segment_endpoint(
    geom: SegmentGeometry, theta_proximal: float, theta_distal: float
) -> PlanarPoint:
    point = non_uniform_segment_endpoints(
        [geom],
        np.array([_check_theta(theta_proximal)]),
        np.array([_check_theta(theta_distal)]),
    )[0]
    return PlanarPoint.from_array(point)


def segment_rotation(theta: float, index: int = 1) -> PlanarRotation:  # noqa: ARG001
    """Rotation from the frame at the tip of segment `index` to its base frame.

    Every segment contributes the rotation of its own bend angle; `index` is
    accepted so callers can name the segment a rotation belongs to.
    """
    return PlanarRotation(angle=_check_theta(theta))


def chain_to_world(
    geoms: Sequence[SegmentGeometry], thetas: Sequence[float]
) -> list[PlanarPoint]:
    if len(geoms) != len(thetas):
        error_msg = f"got {len(geoms)} segment(s) and {len(thetas)} bend angle(s)"
        raise exceptions.InvalidInputError(error_msg)

    values = _check_thetas(list(thetas))
    local = segment_endpoints(geoms, values)
    world = compose_world(values, local)
    return [PlanarPoint.from_array(point) for point in world]


def total_length(geoms: Iterable[SegmentGeometry]) -> float:
    """Arm length used to normalise position errors (mm)."""
    return float(sum(geom.length for geom in geoms))


def default_geometry(
    modules: int = const.DEFAULT_MODULES,
    segments_per_module: int = const.DEFAULT_SEGMENTS_PER_MODULE,
    arc_length: float = const.DEFAULT_ARC_LENGTH_MM,
    offset_length: float = const.DEFAULT_OFFSET_LENGTH_MM,
) -> tuple[SegmentGeometry, ...]:
    """Three actuator modules with two sensing segments each (about 583 mm)."""
    count = modules * segments_per_module
    return tuple(
        SegmentGeometry(index=i, arc_length=arc_length, offset_length=offset_length)
        for i in range(1, count + 1)
    )


def geometry_from_dict(data: dict[str, Any]) -> tuple[SegmentGeometry, ...]:
    try:
        segments = data["segments"]
        return tuple(
            SegmentGeometry(
                index=i,
                arc_length=float(segment["arc_length_mm"]),
                offset_length=float(segment.get("offset_length_mm", 0.0)),
                offset_follows_bend=segment.get("offset_follows_bend"),
            )
            for i, segment in enumerate(segments, start=1)
        )
    except (KeyError, TypeError) as exc:
        error_msg = f"invalid geometry description: {exc!r}"
        raise exceptions.InvalidInputError(error_msg) from exc


def geometry_to_dict(geoms: Iterable[SegmentGeometry]) -> dict[str, Any]:
    return {"segments": [geom.to_dict() for geom in geoms]}


def load_geometry(path: str | PathLike[str]) -> tuple[SegmentGeometry, ...]:
    with Path(path).open(encoding="utf-8") as file:
        data = json.load(file)
    geoms = geometry_from_dict(data)
    if not geoms:
        error_msg = f"geometry file {path} declares no segments"
        raise exceptions.InvalidInputError(error_msg)
    return geoms


def save_geometry(
    geoms: Iterable[SegmentGeometry], path: str | PathLike[str]
) -> Path:
    target = Path(path)
    target.write_text(
        json.dumps(geometry_to_dict(geoms), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return target
