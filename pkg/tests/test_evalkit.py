import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lidarsot.diagnostics import monte_carlo_iou, random_box_pair
from lidarsot.evalkit import CategoryResult, aggregate, iou3d, ope_metrics, precision_from_distances, success_from_ious
from lidarsot.geometry import Box3D


def test_iou_identical_and_disjoint():
    a = Box3D(1, 2, 3, 1, 2, 3, 0.4)
    assert iou3d(a, a) == pytest.approx(1.0)
    assert iou3d(a, Box3D(10, 2, 3, 1, 2, 3, 0.4)) == 0.0
    assert iou3d(a, Box3D(1, 2, 9, 1, 2, 3, 0.4)) == 0.0


def test_iou_axis_aligned_shift():
    a = Box3D(0, 0, 0, 2, 2, 2, 0)
    assert iou3d(a, Box3D(1, 0, 0, 2, 2, 2, 0)) == pytest.approx(1 / 3)


def test_iou_rotated_square_closed_form():
    a = Box3D(0, 0, 0, 2, 2, 1, 0)
    b = Box3D(0, 0, 0, 2, 2, 1, math.pi / 4)
    inter = 8 * (math.sqrt(2) - 1)  # regular octagon inside both squares
    assert iou3d(a, b) == pytest.approx(inter / (8 - inter))


def test_iou_matches_monte_carlo():
    rng = np.random.default_rng(0)
    for _ in range(10):
        a, b = random_box_pair(rng)
        assert abs(iou3d(a, b) - monte_carlo_iou(a, b, 200_000, rng)) < 0.01


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_iou_symmetric_and_bounded(seed):
    a, b = random_box_pair(np.random.default_rng(seed))
    v = iou3d(a, b)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(iou3d(b, a), abs=1e-12)


def test_perfect_and_failed_tracking():
    boxes = [Box3D(i, 0, 0, 1, 2, 1, 0) for i in range(5)]
    assert ope_metrics(boxes, boxes) == (100.0, 100.0)
    far = [Box3D(i + 10, 0, 0, 1, 2, 1, 0) for i in range(5)]
    s, p = ope_metrics(far, boxes)
    assert s == pytest.approx(0.5) and p == 0.0  # only the tau=0 sample counts a zero IoU


def test_constant_half_iou():
    # step curve: 1 up to tau=0.5 then 0; trapezoid adds half a bin
    assert success_from_ious([0.5] * 10) == pytest.approx(50.5)


def test_precision_curve():
    assert precision_from_distances([0.0, 0.0]) == 100.0
    assert precision_from_distances([1.0]) == pytest.approx(50.5)


def test_length_mismatch():
    with pytest.raises(ValueError):
        ope_metrics([Box3D(0, 0, 0, 1, 1, 1, 0)], [])


def test_aggregate_weighted_means():
    rep = aggregate([CategoryResult("a", 60, 70, 1), CategoryResult("b", 30, 40, 2)])
    assert rep.mean_success == pytest.approx(40)
    assert rep.mean_precision == pytest.approx(50)
    one = aggregate([CategoryResult("a", 12.5, 20, 9)])
    assert (one.mean_success, one.mean_precision) == (12.5, 20)


def test_published_table_mean():
    rows = [("Car", 73.6, 84.1, 6424), ("Pedestrian", 74.3, 94.5, 308), ("Van", 58.7, 66.5, 1248), ("Cyclist", 55.6, 82.4, 6088)]
    rep = aggregate([CategoryResult(*r) for r in rows])
    assert rep.total_frames == 14068
    assert rep.mean_success == pytest.approx(64.504, abs=1e-3)
    assert rep.mean_precision == pytest.approx(82.031, abs=1e-3)


def test_report_write(tmp_path):
    rep = aggregate([CategoryResult("Car", 50, 60, 10)])
    rep.write(tmp_path / "r.txt")
    text = (tmp_path / "r.txt").read_text()
    assert "mean.success=50.0000" in text and "Car" in text
