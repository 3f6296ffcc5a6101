# pyright: reportMissingParameterType=false
# pyright: reportUnknownParameterType=false
from __future__ import annotations

import math

import numpy as np
import pytest

from proprio_fusion import exceptions
from proprio_fusion.kinematics import (
    chain_to_world,
    curvature_endpoint,
    curvature_endpoints,
    default_geometry,
    geometry_from_dict,
    geometry_to_dict,
    non_uniform_segment_endpoints,
    offset_endpoint,
    segment_endpoint,
    segment_endpoints,
    segment_rotation,
    total_length,
)
from proprio_fusion.types import PlanarRotation, SegmentGeometry

_ARC = 150.0
_KAPPA = 2.0 * _ARC / math.pi


def _homogeneous_chain(geoms, thetas):
    """World endpoints by composing one 3x3 transform per segment."""
    transform = np.eye(3)
    points = []
    for geom, theta in zip(geoms, thetas):
        local = segment_endpoint(geom, theta).as_array()
        rotation = segment_rotation(theta).matrix
        step = np.eye(3)
        # columns: distal frame axes expressed in the proximal frame
        step[:2, :2] = rotation
        step[:2, 2] = local
        world = transform @ np.array([local[0], local[1], 1.0])
        points.append(world[:2])
        transform = transform @ step
    return np.array(points)


def test_straight_curvature_endpoint():
    point = curvature_endpoint(SegmentGeometry(index=1, arc_length=_ARC), 0.0)
    assert point.x == pytest.approx(0.0, abs=1e-12)
    assert point.y == pytest.approx(_ARC)


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_quarter_turn_curvature_endpoint(sign):
    point = curvature_endpoint(SegmentGeometry(index=1, arc_length=_ARC), sign * math.pi / 2)
    assert point.x == pytest.approx(sign * _KAPPA, abs=1e-9)
    assert point.y == pytest.approx(_KAPPA, abs=1e-9)
    assert abs(point.x) == pytest.approx(95.49, abs=5e-3)


def test_curvature_endpoint_is_continuous_at_zero():
    geom = SegmentGeometry(index=1, arc_length=_ARC)
    eps = 1e-6
    plus, minus = curvature_endpoint(geom, eps), curvature_endpoint(geom, -eps)
    assert plus.x == pytest.approx(-minus.x, abs=1e-9 * _ARC)
    assert plus.y == pytest.approx(minus.y, abs=1e-9 * _ARC)

    threshold = 1e-4
    below = curvature_endpoint(geom, threshold * (1 - 1e-9))
    above = curvature_endpoint(geom, threshold * (1 + 1e-9))
    assert below.x == pytest.approx(above.x, abs=1e-9 * _ARC)
    assert below.y == pytest.approx(above.y, abs=1e-9 * _ARC)


@pytest.mark.parametrize("theta", [-3.0, -1.2, -1e-5, 0.0, 2e-4, 0.7, 3.1])
def test_arc_length_is_preserved(theta):
    # polyline through densely sampled points of the arc
    fractions = np.linspace(0.0, 1.0, 20_001)
    points = curvature_endpoints(_ARC * fractions, theta * fractions)
    length = np.sum(np.linalg.norm(np.diff(points, axis=0), axis=1))
    assert length == pytest.approx(_ARC, rel=1e-6)


def test_offset_endpoint():
    odd = SegmentGeometry(index=1, arc_length=_ARC, offset_length=20.0)
    even = SegmentGeometry(index=2, arc_length=_ARC, offset_length=20.0)
    bare = SegmentGeometry(index=3, arc_length=_ARC)

    assert offset_endpoint(even, 1.1).as_array() == pytest.approx([20.0, 0.0])
    assert offset_endpoint(odd, math.pi / 2).as_array() == pytest.approx([0.0, 20.0], abs=1e-12)
    assert offset_endpoint(bare, 0.4).as_array() == pytest.approx([0.0, 0.0])


def test_offset_follows_bend_is_configurable():
    geom = SegmentGeometry(index=2, arc_length=_ARC, offset_length=20.0, offset_follows_bend=True)
    assert offset_endpoint(geom, math.pi / 2).as_array() == pytest.approx([0.0, 20.0], abs=1e-12)


def test_segment_endpoint():
    even = SegmentGeometry(index=2, arc_length=_ARC, offset_length=20.0)
    odd = SegmentGeometry(index=1, arc_length=_ARC, offset_length=20.0)
    bare = SegmentGeometry(index=1, arc_length=_ARC)

    assert segment_endpoint(even, 0.0).as_array() == pytest.approx([20.0, _ARC])
    assert segment_endpoint(odd, math.pi / 2).as_array() == pytest.approx(
        [_KAPPA, _KAPPA + 20.0], abs=1e-9
    )
    assert segment_endpoint(bare, math.pi / 4).as_array() == pytest.approx(
        curvature_endpoint(bare, math.pi / 4).as_array()
    )


def test_single_segment_chain():
    geom = SegmentGeometry(index=1, arc_length=_ARC, offset_length=20.0)
    (point,) = chain_to_world([geom], [0.3])
    assert point.as_array() == pytest.approx(segment_endpoint(geom, 0.3).as_array())


def test_straight_chain_stacks_segments():
    geoms = [SegmentGeometry(index=i, arc_length=_ARC, offset_length=20.0) for i in (1, 2, 3)]
    points = chain_to_world(geoms, [0.0, 0.0, 0.0])
    assert points[-1].as_array() == pytest.approx([60.0, 450.0])


def test_chain_matches_homogeneous_transforms():
    rng = np.random.default_rng(0)
    geoms = default_geometry()
    for _ in range(1000):
        thetas = rng.uniform(-3.0, 3.0, size=len(geoms))
        world = np.array([p.as_array() for p in chain_to_world(geoms, thetas.tolist())])
        np.testing.assert_allclose(world, _homogeneous_chain(geoms, thetas), atol=1e-9)


def test_quarter_turns_chain():
    geoms = [SegmentGeometry(index=i, arc_length=_ARC) for i in (1, 2)]
    thetas = [math.pi / 2, -math.pi / 2]
    world = np.array([p.as_array() for p in chain_to_world(geoms, thetas)])
    np.testing.assert_allclose(world, _homogeneous_chain(geoms, thetas), atol=1e-9)
    # second arc turns back to the original heading, shifted along +x
    assert world[-1] == pytest.approx([2.0 * _KAPPA, 2.0 * _KAPPA], abs=1e-9)


def test_chain_length_mismatch():
    with pytest.raises(exceptions.InvalidInputError):
        chain_to_world(default_geometry(), [0.0])


@pytest.mark.parametrize("theta", [math.nan, math.inf, math.pi, -4.0])
def test_invalid_bend_angle(theta):
    with pytest.raises(exceptions.InvalidInputError):
        curvature_endpoint(SegmentGeometry(index=1, arc_length=_ARC), theta)


def test_segment_rotation():
    assert segment_rotation(0.0).matrix == pytest.approx(np.eye(2))

    quarter = segment_rotation(math.pi / 2).matrix
    assert quarter.T @ quarter == pytest.approx(np.eye(2), abs=1e-12)
    assert np.linalg.det(quarter) == pytest.approx(1.0, abs=1e-12)

    pair = segment_rotation(0.8) @ segment_rotation(-0.8)
    assert pair.matrix == pytest.approx(np.eye(2), abs=1e-12)


def test_rotation_orthonormality():
    for angle in np.random.default_rng(1).uniform(-math.pi, math.pi, size=200):
        matrix = PlanarRotation(angle=float(angle)).matrix
        np.testing.assert_allclose(matrix.T @ matrix, np.eye(2), atol=1e-12)
        assert np.linalg.det(matrix) == pytest.approx(1.0, abs=1e-12)


def test_vectorised_endpoints_match_scalar():
    geoms = default_geometry()
    thetas = np.random.default_rng(2).uniform(-1.0, 1.0, size=(5, len(geoms)))
    points = segment_endpoints(geoms, thetas)
    assert points.shape == (5, len(geoms), 2)
    for row, angles in zip(points, thetas):
        expected = [segment_endpoint(g, float(a)).as_array() for g, a in zip(geoms, angles)]
        np.testing.assert_allclose(row, expected, atol=1e-12)


def test_equal_sub_arcs_reduce_to_uniform_bend():
    geoms = default_geometry()
    thetas = np.linspace(-0.6, 0.6, len(geoms))
    np.testing.assert_allclose(
        non_uniform_segment_endpoints(geoms, thetas / 2, thetas / 2),
        segment_endpoints(geoms, thetas),
        atol=1e-9,
    )


def test_default_geometry():
    geoms = default_geometry()
    assert len(geoms) == 6
    assert total_length(geoms) == pytest.approx(583.0, abs=1.0)
    assert [g.offset_follows_bend for g in geoms] == [True, False] * 3
    assert geometry_from_dict(geometry_to_dict(geoms)) == geoms


def test_invalid_geometry():
    with pytest.raises(exceptions.InvalidInputError):
        SegmentGeometry(index=1, arc_length=0.0)
    with pytest.raises(exceptions.InvalidInputError):
        SegmentGeometry(index=0, arc_length=10.0)
    with pytest.raises(exceptions.InvalidInputError):
        geometry_from_dict({"segments": [{"offset_length_mm": 1.0}]})
