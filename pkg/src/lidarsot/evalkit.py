"""Tracking metrics: rotated 3D IoU, one-pass Success/Precision, frame-weighted means.

Success is the area under the curve ``tau -> fraction of frames with
IoU >= tau`` for ``tau`` in [0, 1]; Precision is the area under
``d -> fraction of frames with center error <= d`` for ``d`` in [0, 2] m.
Both curves are sampled at 101 evenly spaced thresholds, integrated with
the trapezoid rule, normalized by the threshold range and reported in
percent. With these inclusive comparisons a perfect track scores exactly
100 on both.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Box3D

N_THRESHOLDS = 101
MAX_DISTANCE = 2.0


def _clip(subject: list[np.ndarray], a: np.ndarray, b: np.ndarray) -> list[np.ndarray]:
    """Keep the part of ``subject`` left of the directed edge a->b (Sutherland-Hodgman step)."""

    def side(p):
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])

    out = []
    n = len(subject)
    for i in range(n):
        cur, nxt = subject[i], subject[(i + 1) % n]
        sc, sn = side(cur), side(nxt)
        if sc >= 0:
            out.append(cur)
        if (sc >= 0) != (sn >= 0):
            t = sc / (sc - sn)
            out.append(cur + t * (nxt - cur))
    return out


def polygon_area(poly) -> float:
    """Shoelace area of a simple polygon given as an (n, 2) sequence."""
    if len(poly) < 3:
        return 0.0
    p = np.asarray(poly)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def bev_intersection(a: Box3D, b: Box3D) -> float:
    poly = list(a.corners_bev())
    clip = b.corners_bev()
    for i in range(4):
        if not poly:
            return 0.0
        poly = _clip(poly, clip[i], clip[(i + 1) % 4])
    return polygon_area(poly)


def iou3d(a: Box3D, b: Box3D) -> float:
    """Volume IoU of two boxes rotated about the up axis."""
    zo = min(a.z + a.h / 2, b.z + b.h / 2) - max(a.z - a.h / 2, b.z - b.h / 2)
    if zo <= 0:
        return 0.0
    inter = bev_intersection(a, b) * zo
    union = a.volume() + b.volume() - inter
    return float(min(max(inter / union, 0.0), 1.0))


def center_distance(a: Box3D, b: Box3D) -> float:
    return float(np.linalg.norm(a.center - b.center))


def _auc(values: np.ndarray, thresholds: np.ndarray, above: bool) -> float:
    if above:
        curve = np.array([(values >= t).mean() for t in thresholds])
    else:
        curve = np.array([(values <= t).mean() for t in thresholds])
    span = thresholds[-1] - thresholds[0]
    return float(np.trapezoid(curve, thresholds) / span * 100.0)


def ope_metrics(pred: list[Box3D], gt: list[Box3D]) -> tuple[float, float]:
    """``(success, precision)`` in percent for one sequence."""
    if len(pred) != len(gt):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(gt)} ground-truth boxes")
    if not pred:
        raise ValueError("need at least one frame")
    ious = np.array([iou3d(p, g) for p, g in zip(pred, gt)])
    dists = np.array([center_distance(p, g) for p, g in zip(pred, gt)])
    return success_from_ious(ious), precision_from_distances(dists)


def success_from_ious(ious) -> float:
    return _auc(np.asarray(ious, dtype=float), np.linspace(0.0, 1.0, N_THRESHOLDS), above=True)


def precision_from_distances(dists) -> float:
    return _auc(np.asarray(dists, dtype=float), np.linspace(0.0, MAX_DISTANCE, N_THRESHOLDS), above=False)


@dataclass
class CategoryResult:
    name: str
    success: float
    precision: float
    frames: int


@dataclass
class EvalReport:
    categories: list[CategoryResult]
    mean_success: float
    mean_precision: float
    total_frames: int
    extras: dict = field(default_factory=dict)

    def table(self) -> str:
        """Aligned text table, one row per category plus the weighted mean."""
        rows = [(c.name, c.frames, c.success, c.precision) for c in self.categories]
        rows.append(("Mean", self.total_frames, self.mean_success, self.mean_precision))
        width = max(8, max(len(r[0]) for r in rows))
        lines = [f"{'category':<{width}} {'frames':>8} {'success':>8} {'precision':>9}"]
        lines += [f"{n:<{width}} {f:>8d} {s:>8.1f} {p:>9.1f}" for n, f, s, p in rows]
        return "\n".join(lines)

    def key_values(self) -> str:
        lines = []
        for c in self.categories:
            lines += [f"{c.name}.success={c.success:.4f}", f"{c.name}.precision={c.precision:.4f}", f"{c.name}.frames={c.frames}"]
        lines += [
            f"mean.success={self.mean_success:.4f}",
            f"mean.precision={self.mean_precision:.4f}",
            f"mean.frames={self.total_frames}",
        ]
        return "\n".join(lines)

    def write(self, path) -> None:
        Path(path).write_text(self.table() + "\n\n" + self.key_values() + "\n")


def aggregate(results: list[CategoryResult]) -> EvalReport:
    """Frame-count-weighted mean of per-category Success and Precision."""
    if not results:
        raise ValueError("nothing to aggregate")
    total = sum(r.frames for r in results)
    if total <= 0:
        raise ValueError("total frame count must be positive")
    ms = sum(r.success * r.frames for r in results) / total
    mp = sum(r.precision * r.frames for r in results) / total
    return EvalReport(list(results), ms, mp, total)
