"""Online tracking loop."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .decoder import decode_box
from .geometry import Box3D
from .model import PyramidTracker
from .numerics import no_grad
from .pointops import PointCloud
from .regions import EmptyRegionError, crop_canonicalize, make_template, sub_seed

LOST = "lost"


@dataclass
class TrackResult:
    boxes: list[Box3D]
    flags: list[str]
    seconds: list[float] = field(default_factory=list)


def track_sequence(model: PyramidTracker, frames: list[PointCloud], init: Box3D) -> TrackResult:
    """Track from ``init`` through ``frames``; box sizes stay fixed.

    When a frame's template or search region is empty the previous box is
    carried forward, the frame is flagged ``lost`` and the next search
    region is enlarged by the configured factor.
    """
    if not frames:
        raise ValueError("need at least one frame")
    cfg = model.config
    rng = np.random.default_rng(cfg.tracker.seed)
    base = cfg.tracker.search_enlarge
    enlarge = base
    boxes, flags, secs = [init], ["-"], [0.0]
    model.eval()
    with no_grad():
        for t in range(1, len(frames)):
            start = time.perf_counter()
            prev = boxes[-1]
            history = (frames[t - 1], prev) if t > 1 else (None, None)
            try:
                template = make_template(frames[0], init, *history, cfg.data.template_points, sub_seed(rng))
                search = crop_canonicalize(
                    frames[t], prev, enlarge, cfg.data.search_points, sub_seed(rng), z_range=tuple(cfg.voxel.z_range)
                )
            except EmptyRegionError:
                boxes.append(prev)
                flags.append(LOST)
                secs.append(time.perf_counter() - start)
                enlarge = base * cfg.tracker.lost_scale
                continue
            heads, _, _ = model(template, search)
            boxes.append(decode_box(heads, model.geometry, prev))
            flags.append("-")
            secs.append(time.perf_counter() - start)
            enlarge = base
    return TrackResult(boxes, flags, secs)
