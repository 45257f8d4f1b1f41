"""Oriented boxes and the world <-> canonical frame transforms.

Frame convention: z is up, ``theta`` is the heading about z measured from
the +x axis. A box's length ``l`` runs along its heading (local x), its
width ``w`` along local y and its height ``h`` along z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


def wrap_angle(theta: float) -> float:
    """Map an angle into (-pi, pi]."""
    t = math.remainder(theta, 2 * math.pi)
    return math.pi if t == -math.pi else t


@dataclass(frozen=True)
class Box3D:
    x: float
    y: float
    z: float
    w: float
    l: float  # noqa: E741
    h: float
    theta: float

    def __post_init__(self):
        for name in ("x", "y", "z", "w", "l", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.w > 0 and self.l > 0 and self.h > 0):
            raise ValueError(f"box extents must be positive, got w={self.w} l={self.l} h={self.h}")
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def with_center(self, center) -> "Box3D":
        return replace(self, x=float(center[0]), y=float(center[1]), z=float(center[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.w, self.l, self.h, self.theta])

    def corners_bev(self) -> np.ndarray:
        """Four (x, y) corners, counter-clockwise."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        hl, hw = self.l / 2, self.w / 2
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.x, self.y])

    def volume(self) -> float:
        return self.w * self.l * self.h


def _rot_z(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def world_to_canonical(points: np.ndarray, ref: Box3D) -> np.ndarray:
    """Translate by ``-center`` then rotate by ``-theta`` about z."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return (pts - ref.center) @ _rot_z(ref.theta)


def canonical_to_world(points: np.ndarray, ref: Box3D) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return pts @ _rot_z(ref.theta).T + ref.center


def box_to_canonical(box: Box3D, ref: Box3D) -> Box3D:
    center = world_to_canonical(box.center, ref)[0]
    return replace(box, x=center[0], y=center[1], z=center[2], theta=wrap_angle(box.theta - ref.theta))


def box_to_world(box: Box3D, ref: Box3D) -> Box3D:
    center = canonical_to_world(box.center, ref)[0]
    return replace(box, x=center[0], y=center[1], z=center[2], theta=wrap_angle(box.theta + ref.theta))


def points_in_box(points: np.ndarray, box: Box3D, enlarge_xy: float = 0.0, z_range=None) -> np.ndarray:
    """Boolean mask of points inside ``box`` grown by ``enlarge_xy`` on each horizontal side.

    If ``z_range`` is given it replaces the box's own vertical extent,
    expressed relative to the box center.
    """
    local = world_to_canonical(points, box)
    inside = (np.abs(local[:, 0]) <= box.l / 2 + enlarge_xy) & (np.abs(local[:, 1]) <= box.w / 2 + enlarge_xy)
    if z_range is None:
        inside &= np.abs(local[:, 2]) <= box.h / 2
    else:
        inside &= (local[:, 2] >= z_range[0]) & (local[:, 2] <= z_range[1])
    return inside
