import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lidarsot.geometry import Box3D, box_to_canonical, box_to_world, canonical_to_world, points_in_box, world_to_canonical, wrap_angle

coord = st.floats(-50, 50, allow_nan=False)
angle = st.floats(-10, 10, allow_nan=False)


def test_wrap_angle_range():
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


def test_box_rejects_bad_extent():
    with pytest.raises(ValueError):
        Box3D(0, 0, 0, 0, 1, 1, 0)


@settings(max_examples=50, deadline=None)
@given(coord, coord, coord, angle)
def test_canonical_round_trip(x, y, z, theta):
    ref = Box3D(x, y, z, 1.8, 4.2, 1.6, theta)
    pts = np.random.default_rng(0).uniform(-60, 60, size=(20, 3))
    back = canonical_to_world(world_to_canonical(pts, ref), ref)
    assert np.max(np.abs(back - pts)) < 1e-9


@settings(max_examples=50, deadline=None)
@given(coord, coord, angle, angle)
def test_box_round_trip(x, y, t1, t2):
    ref = Box3D(x, y, 0.5, 2, 4, 1.5, t1)
    box = Box3D(x + 1, y - 2, 0.2, 2, 4, 1.5, t2)
    back = box_to_world(box_to_canonical(box, ref), ref)
    np.testing.assert_allclose(back.center, box.center, atol=1e-9)
    assert abs(wrap_angle(back.theta - box.theta)) < 1e-12


def test_corners_are_counter_clockwise():
    c = Box3D(0, 0, 0, 2, 4, 1, 0).corners_bev()
    area2 = np.sum(c[:, 0] * np.roll(c[:, 1], -1) - np.roll(c[:, 0], -1) * c[:, 1])
    assert area2 > 0
    assert area2 / 2 == pytest.approx(8.0)


def test_points_in_rotated_box():
    box = Box3D(1, 1, 0, 1, 3, 1, math.pi / 2)  # long side along +y
    pts = np.array([[1, 2.4, 0], [2.4, 1, 0], [1, 1, 0.6]])
    assert points_in_box(pts, box).tolist() == [True, False, False]
    assert points_in_box(pts, box, enlarge_xy=1.0).tolist() == [True, True, False]
    assert points_in_box(pts, box, z_range=(-1, 1)).tolist() == [True, False, True]
