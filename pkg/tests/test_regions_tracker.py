import math

import numpy as np
import pytest

from lidarsot.config import toy_config
from lidarsot.dataio import SynthSpec, synth_sequence
from lidarsot.geometry import Box3D
from lidarsot.model import PyramidTracker
from lidarsot.pointops import PointCloud
from lidarsot.regions import EmptyRegionError, crop_canonicalize, make_template
from lidarsot.tracker import LOST, track_sequence


def cloud(pos, feat=None):
    pos = np.asarray(pos, float)
    return PointCloud(pos, np.zeros((len(pos), 1)) if feat is None else np.asarray(feat, float))


def test_crop_axis_aligned_interior():
    box = Box3D(10, 5, 0, 2, 4, 2, 0)
    frame = cloud([[10, 5, 0], [11.9, 5.9, 0.9], [12.1, 5, 0], [10, 5, 1.1]])
    out = crop_canonicalize(frame, box, 0.0)
    np.testing.assert_allclose(out.positions, [[0, 0, 0], [1.9, 0.9, 0.9]], atol=1e-12)


def test_crop_rotated_matches_unrotated():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-3, 3, size=(200, 3))
    a = crop_canonicalize(cloud(pts), Box3D(0, 0, 0, 2, 4, 2, 0), 0.5)
    rot = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
    b = crop_canonicalize(cloud(pts @ rot.T), Box3D(0, 0, 0, 2, 4, 2, math.pi / 2), 0.5)
    np.testing.assert_allclose(np.sort(a.positions, axis=0), np.sort(b.positions, axis=0), atol=1e-12)


def test_crop_empty_region():
    with pytest.raises(EmptyRegionError):
        crop_canonicalize(cloud([[50, 0, 0]]), Box3D(0, 0, 0, 1, 1, 1, 0), 2.0)


def test_template_union_and_fallback():
    box = Box3D(0, 0, 0, 2, 2, 2, 0)
    first = cloud([[0, 0, 0], [0.5, 0, 0]], [[1], [2]])
    prev = cloud([[0, 0.5, 0]], [[3]])
    t = make_template(first, box, prev, box, 3, seed=0)
    assert sorted(t.features[:, 0]) == [1, 2, 3]
    t1 = make_template(first, box, None, None, 2, seed=0)
    assert sorted(t1.features[:, 0]) == [1, 2]
    far = cloud([[30, 0, 0]])
    t2 = make_template(first, box, far, box, 2, seed=0)
    assert sorted(t2.features[:, 0]) == [1, 2]
    with pytest.raises(EmptyRegionError):
        make_template(far, box, far, box, 2)


def _model():
    return PyramidTracker(toy_config(), seed=0)


def _toy_seq(frames=4):
    return synth_sequence(SynthSpec(frames=frames, size=(0.6, 1.2, 0.6), speed=0.05, target_points=80, clutter_points=20, clutter_extent=1.0), seed=0)


def test_single_frame_returns_init():
    seq = _toy_seq(1)
    res = track_sequence(_model(), seq.frames, seq.boxes[0])
    assert res.boxes == [seq.boxes[0]]


def test_length_sizes_and_determinism():
    seq = _toy_seq(4)
    a = track_sequence(_model(), seq.frames, seq.boxes[0])
    b = track_sequence(_model(), seq.frames, seq.boxes[0])
    assert len(a.boxes) == 4
    assert all((x.w, x.l, x.h) == (0.6, 1.2, 0.6) for x in a.boxes)
    assert a.boxes == b.boxes


def test_lost_frame_keeps_previous_box_and_widens_search():
    seq = _toy_seq(4)
    frames = list(seq.frames)
    frames[2] = cloud([[500, 500, 0]])
    model = _model()
    res = track_sequence(model, frames, seq.boxes[0])
    assert res.flags[2] == LOST
    assert res.boxes[2] == res.boxes[1]
    assert res.flags[3] != LOST
