"""Targets, losses and training-sample augmentation.

Classification loss (per pixel, prediction ``p`` clamped to
``[1e-6, 1 - 1e-6]``, label ``g``)::

    g == 1 :  -alpha       * (1 - p)**gamma            * log(p)
    g <  1 :  -(1 - alpha) * (1 - g)**beta  * p**gamma * log(1 - p)

summed over the map and divided by ``max(1, #positives)``; defaults are
alpha=0.25, gamma=2, beta=4. Regression losses are L1 averaged over the
masked locations (zero when the mask is empty).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import LossConfig, RunConfig
from .decoder import HeadOutputs
from .encoder import GridGeometry
from .geometry import Box3D, box_to_canonical
from .numerics import Tensor, clip, log, tabs
from .pointops import EmptyCloudError, PointCloud
from .regions import EmptyRegionError, crop_canonicalize, make_template, sub_seed


@dataclass
class LabelMaps:
    bev_cls: np.ndarray  # (L, W)
    bev_reg: np.ndarray  # (3 or 4, L, W)
    bev_mask: np.ndarray  # (L, W) bool
    z_cls: np.ndarray  # (H,)
    z_reg: np.ndarray  # (1, H)
    z_mask: np.ndarray  # (H,) bool
    valid: bool = True


def construct_labels(box: Box3D, geom: GridGeometry, radius: float = 2.0, bev_z_channel: bool = False) -> LabelMaps:
    """Heatmap and offset targets for a box given in the canonical (grid) frame.

    A pixel gets 1 at the discrete center, ``1 / (d + 1)`` when it lies
    inside the box footprint within ``radius`` pixels of the center (``d``
    the pixel distance), and 0 otherwise. The vertical axis follows the
    same rule in 1D. With ``bev_z_channel`` the BEV regression target gets
    a fourth channel holding the absolute z in meters.
    """
    H, L, W = geom.H, geom.L, geom.W
    vx, vy, vz = geom.voxel_size
    nreg = 4 if bev_z_channel else 3
    labels = LabelMaps(
        np.zeros((L, W)), np.zeros((nreg, L, W)), np.zeros((L, W), bool),
        np.zeros(H), np.zeros((1, H)), np.zeros(H, bool),
    )
    cx = (box.x - geom.x_range[0]) / vx
    cy = (box.y - geom.y_range[0]) / vy
    cz = (box.z - geom.z_range[0]) / vz
    ix, iy, iz = math.floor(cx), math.floor(cy), math.floor(cz)
    if not (0 <= ix < W and 0 <= iy < L and 0 <= iz < H):
        labels.valid = False
        return labels

    rows, cols = np.mgrid[0:L, 0:W]
    gamma = np.hypot(cols - ix, rows - iy)
    px = geom.x_range[0] + (cols + 0.5) * vx - box.x
    py = geom.y_range[0] + (rows + 0.5) * vy - box.y
    c, s = math.cos(box.theta), math.sin(box.theta)
    inside = (np.abs(c * px + s * py) <= box.l / 2) & (np.abs(-s * px + c * py) <= box.w / 2)
    bev = np.where(inside & (gamma <= radius), 1.0 / (gamma + 1.0), 0.0)
    bev[iy, ix] = 1.0
    labels.bev_cls = bev
    labels.bev_reg[0, iy, ix] = cx - ix
    labels.bev_reg[1, iy, ix] = cy - iy
    labels.bev_reg[2, iy, ix] = box.theta
    if bev_z_channel:
        labels.bev_reg[3, iy, ix] = box.z
    labels.bev_mask[iy, ix] = True

    bins = np.arange(H)
    zgamma = np.abs(bins - iz).astype(float)
    pz = geom.z_range[0] + (bins + 0.5) * vz - box.z
    zin = np.abs(pz) <= box.h / 2
    zc = np.where(zin & (zgamma <= radius), 1.0 / (zgamma + 1.0), 0.0)
    zc[iz] = 1.0
    labels.z_cls = zc
    labels.z_reg[0, iz] = cz - iz
    labels.z_mask[iz] = True
    return labels


def focal_loss(pred: Tensor, gt: np.ndarray, alpha: float = 0.25, gamma: float = 2.0, beta: float = 4.0) -> Tensor:
    gt = np.asarray(gt, dtype=pred.dtype)
    if gt.shape != pred.shape:
        raise ValueError(f"focal_loss: pred {pred.shape} vs gt {gt.shape}")
    p = clip(pred, 1e-6, 1 - 1e-6)
    pos = (gt == 1.0).astype(pred.dtype)
    neg_w = (1.0 - pos) * (1.0 - gt) ** beta
    pos_term = (1.0 - p) ** gamma * log(p) * (-alpha * pos)
    neg_term = p**gamma * log(1.0 - p) * (-(1.0 - alpha) * neg_w)
    npos = max(1.0, float(pos.sum()))
    return (pos_term + neg_term).sum() * (1.0 / npos)


def masked_l1(pred: Tensor, gt: np.ndarray, mask: np.ndarray) -> Tensor:
    """Sum of |pred - gt| over masked locations (all leading channels), divided by the location count."""
    mask = np.asarray(mask, dtype=pred.dtype)
    count = float(mask.sum())
    if count == 0:
        return (pred * 0.0).sum()
    return (tabs(pred - np.asarray(gt, dtype=pred.dtype)) * mask).sum() * (1.0 / count)


def total_loss(heads: HeadOutputs, labels: LabelMaps, cfg: LossConfig) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum ``lambda_cls * (cls_bev + cls_z) + lambda_reg * (reg_bev + reg_z)``."""
    fl = dict(alpha=cfg.focal_alpha, gamma=cfg.focal_gamma, beta=cfg.neg_power)
    cls_bev = focal_loss(heads.bev_cls, labels.bev_cls, **fl)
    reg_bev = masked_l1(heads.bev_reg, labels.bev_reg, labels.bev_mask)
    terms = {"cls_bev": cls_bev, "reg_bev": reg_bev}
    if heads.z_cls is not None:
        terms["cls_z"] = focal_loss(heads.z_cls, labels.z_cls, **fl)
        terms["reg_z"] = masked_l1(heads.z_reg, labels.z_reg, labels.z_mask)
    cls = terms["cls_bev"] + terms["cls_z"] if "cls_z" in terms else terms["cls_bev"]
    reg = terms["reg_bev"] + terms["reg_z"] if "reg_z" in terms else terms["reg_bev"]
    total = cls * cfg.lambda_cls + reg * cfg.lambda_reg
    breakdown = {name: float(t.data) for name, t in terms.items()}
    breakdown["total"] = float(total.data)
    return total, breakdown


def format_breakdown(step: int, breakdown: dict[str, float]) -> str:
    """One log line: ``step=<n> total=<v> cls_bev=<v> ...``."""
    keys = ["total"] + sorted(k for k in breakdown if k != "total")
    return f"step={step} " + " ".join(f"{k}={breakdown[k]:.6g}" for k in keys)


@dataclass
class TrainingSample:
    template: PointCloud
    search: PointCloud
    target: Box3D  # ground truth in the search reference frame
    reference: Box3D  # shifted box the search region was cropped around


def random_shift(box: Box3D, rng: np.random.Generator, shift_xy: float, shift_z: float) -> Box3D:
    d = rng.uniform(-1.0, 1.0, size=3) * np.array([shift_xy, shift_xy, shift_z])
    return box.with_center(box.center + d)


def augment(
    frames: list[PointCloud],
    boxes: list[Box3D],
    t: int,
    rng: np.random.Generator,
    cfg: RunConfig,
) -> TrainingSample:
    """Training pair for frame ``t`` (>= 1).

    Template: first-frame box crop plus the previous frame cropped by its
    randomly shifted ground truth. Search: frame ``t`` cropped around its
    randomly shifted ground truth, enlarged per horizontal side. Raises
    :class:`EmptyRegionError` when the search region holds no points.
    """
    if not 1 <= t < len(frames):
        raise ValueError(f"augment needs 1 <= t < {len(frames)}")
    tc = cfg.train
    prev_ref = random_shift(boxes[t - 1], rng, tc.shift_xy, tc.shift_z)
    try:
        template = make_template(
            frames[0], boxes[0], frames[t - 1], prev_ref, cfg.data.template_points, sub_seed(rng)
        )
    except (EmptyRegionError, EmptyCloudError) as exc:
        raise EmptyRegionError(f"template empty for frame {t}") from exc
    ref = random_shift(boxes[t], rng, tc.shift_xy, tc.shift_z)
    search = crop_canonicalize(
        frames[t], ref, tc.search_enlarge, cfg.data.search_points, sub_seed(rng), z_range=tuple(cfg.voxel.z_range)
    )
    return TrainingSample(template, search, box_to_canonical(boxes[t], ref), ref)
