"""Cropping template/search regions out of full frames into canonical frames."""

from __future__ import annotations

import numpy as np

from .geometry import Box3D, points_in_box, world_to_canonical
from .pointops import PointCloud, resample


class EmptyRegionError(RuntimeError):
    """No points fell inside the requested region."""


def crop_canonicalize(
    frame: PointCloud,
    box: Box3D,
    enlarge: float,
    n: int | None = None,
    seed=0,
    z_range: tuple[float, float] | None = None,
) -> PointCloud:
    """Points inside ``box`` (grown by ``enlarge`` per horizontal side) in the box's canonical frame.

    ``z_range``, when given, replaces the box's vertical extent (relative
    to the box center). The result is resampled to ``n`` points if ``n``.
    """
    if len(frame) == 0:
        raise EmptyRegionError("empty frame")
    mask = points_in_box(frame.positions, box, enlarge, z_range)
    if not mask.any():
        raise EmptyRegionError("no points in region")
    local = PointCloud(world_to_canonical(frame.positions[mask], box), frame.features[mask])
    return resample(local, n, seed) if n is not None else local


def make_template(
    first_frame: PointCloud,
    first_box: Box3D,
    prev_frame: PointCloud | None,
    prev_box: Box3D | None,
    n: int,
    seed=0,
) -> PointCloud:
    """Union of the first-frame crop and the previous-box crop, resampled to ``n``.

    Either crop may be empty; both empty raises :class:`EmptyRegionError`.
    """
    parts = []
    for frame, box in ((first_frame, first_box), (prev_frame, prev_box)):
        if frame is None or box is None:
            continue
        try:
            parts.append(crop_canonicalize(frame, box, 0.0))
        except EmptyRegionError:
            continue
    if not parts:
        raise EmptyRegionError("template crops are empty")
    return resample(PointCloud.concatenate(parts), n, seed)


def sub_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**31 - 1))
