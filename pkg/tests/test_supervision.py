import math

import numpy as np
import pytest

from lidarsot.config import default_config, toy_config
from lidarsot.dataio import SynthSpec, synth_sequence
from lidarsot.decoder import HeadOutputs
from lidarsot.encoder import GridGeometry
from lidarsot.geometry import Box3D
from lidarsot.numerics import Tensor, grad_check
from lidarsot.regions import EmptyRegionError
from lidarsot.supervision import augment, construct_labels, focal_loss, format_breakdown, masked_l1, total_loss

GEOM = GridGeometry.from_config(default_config().voxel)


def test_center_offset_example():
    lab = construct_labels(Box3D(0.0, 0.0, 0.0, 1.8, 4.2, 1.6, 0.0), GEOM)
    assert lab.bev_mask[12, 18]
    assert lab.bev_reg[0, 12, 18] == pytest.approx(2 / 3)
    assert lab.bev_cls[12, 18] == 1.0


def test_label_values_by_distance():
    lab = construct_labels(Box3D(0.0, 0.0, 0.0, 1.8, 4.2, 1.6, 0.0), GEOM)
    assert lab.bev_cls[12, 19] == 0.5
    assert lab.bev_cls[13, 19] == pytest.approx(1 / (math.sqrt(2) + 1))
    assert lab.bev_cls[12, 20] == pytest.approx(1 / 3)
    assert lab.bev_cls[12, 21] == 0.0  # beyond the radius
    assert lab.bev_cls[0, 0] == 0.0  # outside the box


def test_label_outside_box_is_zero_even_within_radius():
    thin = Box3D(0.0, 0.0, 0.0, 0.4, 4.2, 1.6, 0.0)  # pixel rows 11 and 13 fall outside
    lab = construct_labels(thin, GEOM)
    assert lab.bev_cls[13, 18] == 0.0
    assert lab.bev_cls[12, 19] == 0.5


@pytest.mark.parametrize("seed", range(20))
def test_label_invariants(seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(GEOM.mins + 0.01, GEOM.maxs - 0.01)
    box = Box3D(*c, *rng.uniform(0.3, 4, 3), rng.uniform(-3, 3))
    lab = construct_labels(box, GEOM)
    assert (lab.bev_cls == 1).sum() == 1 and (lab.z_cls == 1).sum() == 1
    assert lab.bev_cls.min() >= 0 and lab.bev_cls.max() <= 1
    iy, ix = np.unravel_index(np.argmax(lab.bev_cls), lab.bev_cls.shape)
    rows, cols = np.nonzero(lab.bev_cls)
    d = np.hypot(rows - iy, cols - ix)
    order = np.argsort(d, kind="stable")
    vals = lab.bev_cls[rows, cols][order]
    assert np.all(np.diff(vals) <= 1e-12)


def test_box_outside_region_has_no_positive():
    lab = construct_labels(Box3D(50, 0, 0, 1, 1, 1, 0), GEOM)
    assert not lab.valid and lab.bev_cls.sum() == 0


def test_focal_uniform_half_closed_form():
    gt = np.array([[1.0, 0.0], [0.0, 0.0]])
    loss = focal_loss(Tensor(np.full((2, 2), 0.5)), gt).data
    # positive: 0.25 * 0.25 * ln2; negatives: 3 * 0.75 * 0.25 * ln2
    assert float(loss) == pytest.approx(0.625 * math.log(2), rel=1e-12)


def test_focal_soft_negative_weight():
    gt = np.array([1.0, 0.5])
    pred = Tensor(np.array([0.5, 0.5]))
    expected = 0.25 * 0.25 * math.log(2) + 0.75 * 0.5**4 * 0.25 * math.log(2)
    assert float(focal_loss(pred, gt).data) == pytest.approx(expected)


def test_focal_near_perfect_is_near_zero():
    gt = np.zeros((4, 4))
    gt[1, 2] = 1
    pred = np.where(gt == 1, 1.0, 0.0)
    assert float(focal_loss(Tensor(pred), gt).data) < 1e-10


def test_masked_l1_and_empty_mask():
    pred = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
    gt = np.zeros((2, 2))
    assert float(masked_l1(pred, gt, np.array([[1, 0], [0, 1]])).data) == 2.5
    assert float(masked_l1(pred, gt, np.zeros((2, 2))).data) == 0.0


def _ideal(lab):
    return HeadOutputs(Tensor(lab.bev_cls), Tensor(lab.bev_reg), Tensor(lab.z_cls), Tensor(lab.z_reg))


def test_total_is_sum_of_terms_and_reg_zero_on_targets():
    cfg = default_config()
    lab = construct_labels(Box3D(0.4, 0.1, -0.2, 1.8, 4.2, 1.6, 0.05), GEOM)
    heads = HeadOutputs(Tensor(np.full(lab.bev_cls.shape, 0.3)), Tensor(lab.bev_reg), Tensor(np.full(lab.z_cls.shape, 0.3)), Tensor(lab.z_reg))
    total, parts = total_loss(heads, lab, cfg.loss)
    assert parts["reg_bev"] == 0 and parts["reg_z"] == 0
    assert parts["total"] == pytest.approx(parts["cls_bev"] + parts["cls_z"] + parts["reg_bev"] + parts["reg_z"])
    assert float(total.data) >= 0


def test_total_loss_gradcheck():
    cfg = toy_config()
    g = GridGeometry.from_config(cfg.voxel)
    lab = construct_labels(Box3D(0.1, 0.0, 0.0, 0.6, 1.2, 0.6, 0.0), g)
    rng = np.random.default_rng(0)
    leaves = [
        Tensor(rng.uniform(0.1, 0.9, lab.bev_cls.shape), requires_grad=True),
        Tensor(rng.normal(size=lab.bev_reg.shape) + 0.5, requires_grad=True),
        Tensor(rng.uniform(0.1, 0.9, lab.z_cls.shape), requires_grad=True),
        Tensor(rng.normal(size=lab.z_reg.shape) + 0.5, requires_grad=True),
    ]
    assert grad_check(lambda: total_loss(HeadOutputs(*leaves), lab, cfg.loss)[0], leaves) < 1e-4


def test_breakdown_line_format():
    line = format_breakdown(3, {"total": 1.5, "cls_bev": 1.0, "reg_bev": 0.5})
    assert line == "step=3 total=1.5 cls_bev=1 reg_bev=0.5"


def _seq():
    return synth_sequence(SynthSpec(frames=4, clutter_points=50), seed=1)


def test_augment_is_seed_deterministic():
    cfg = default_config()
    seq = _seq()
    a = augment(seq.frames, seq.boxes, 2, np.random.default_rng(5), cfg)
    b = augment(seq.frames, seq.boxes, 2, np.random.default_rng(5), cfg)
    assert np.array_equal(a.search.positions, b.search.positions)
    assert a.target == b.target


def test_augment_zero_shift_region():
    cfg = default_config()
    cfg.train.shift_xy = cfg.train.shift_z = 0.0
    seq = _seq()
    s = augment(seq.frames, seq.boxes, 1, np.random.default_rng(0), cfg)
    assert s.reference == seq.boxes[1]
    assert np.allclose(s.target.center, 0)
    box = seq.boxes[1]
    assert np.all(np.abs(s.search.positions[:, 0]) <= box.l / 2 + 2.0 + 1e-9)
    assert np.all(np.abs(s.search.positions[:, 1]) <= box.w / 2 + 2.0 + 1e-9)


def test_augment_huge_shift_is_empty():
    cfg = default_config()
    cfg.train.shift_xy = 1000.0
    seq = synth_sequence(SynthSpec(frames=3, clutter_points=0), seed=0)
    with pytest.raises(EmptyRegionError):
        for seed in range(5):
            augment(seq.frames, seq.boxes, 1, np.random.default_rng(seed), cfg)
