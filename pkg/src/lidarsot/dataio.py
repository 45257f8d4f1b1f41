"""Point-cloud / label file formats and the synthetic sequence generator.

KITTI label conversion. A tracking label line holds camera-frame values
``h w l x y z ry`` with ``y`` pointing down and marking the box *bottom*.
Converting to the z-up frame used everywhere else::

    x_up = z_cam
    y_up = -x_cam
    z_up = -(y_cam - h / 2)        # vertical center, sign flipped to up
    theta = wrap(-ry - pi / 2)
    (w, l, h) unchanged

No calibration is applied: the camera and LiDAR origins are treated as
coincident.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Box3D, canonical_to_world, points_in_box, wrap_angle
from .pointops import EmptyCloudError, PointCloud


class FormatError(ValueError):
    """Malformed input file; the message names the line or byte offset."""


# -- velodyne binaries -----------------------------------------------------
def read_pointcloud_bin(path) -> PointCloud:
    """Little-endian float32 ``(x, y, z, intensity)`` records; intensity becomes the feature."""
    raw = Path(path).read_bytes()
    if len(raw) == 0:
        raise EmptyCloudError(f"{path}: empty point cloud file")
    if len(raw) % 16:
        whole = len(raw) // 16 * 16
        raise FormatError(f"{path}: size {len(raw)} not a multiple of 16; truncated record at byte {whole}")
    arr = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    return PointCloud(arr[:, :3].astype(np.float64), arr[:, 3:4].astype(np.float64))


def write_pointcloud_bin(path, pc: PointCloud) -> None:
    feat = pc.features[:, :1] if pc.num_features else np.zeros((len(pc), 1))
    arr = np.concatenate([pc.positions, feat], axis=1).astype("<f4")
    Path(path).write_bytes(arr.tobytes())


# -- KITTI tracking labels ---------------------------------------------------
@dataclass(frozen=True)
class LabelRecord:
    frame: int
    track_id: int
    category: str
    box: Box3D


def kitti_to_box(h: float, w: float, l: float, x: float, y: float, z: float, ry: float) -> Box3D:  # noqa: E741
    return Box3D(z, -x, -(y - h / 2), w, l, h, wrap_angle(-ry - math.pi / 2))


def read_tracking_labels(path, category: str | None = None, track_id: int | None = None) -> list[LabelRecord]:
    """Parse a KITTI tracking label file, keeping only ``category`` / ``track_id`` if given."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        cols = line.split()
        if len(cols) < 17:
            raise FormatError(f"{path}:{lineno}: expected >= 17 columns, got {len(cols)}")
        try:
            frame, tid = int(cols[0]), int(cols[1])
            h, w, l, x, y, z, ry = (float(v) for v in cols[10:17])  # noqa: E741
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
        cat = cols[2]
        if category is not None and cat != category:
            continue
        if track_id is not None and tid != track_id:
            continue
        if cat == "DontCare":
            continue
        try:
            box = kitti_to_box(h, w, l, x, y, z, ry)
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
        out.append(LabelRecord(frame, tid, cat, box))
    return out


@dataclass
class SequenceSample:
    frames: list[PointCloud]
    boxes: list[Box3D]
    category: str = "Car"
    sequence_id: str = "synthetic"

    def __post_init__(self):
        if len(self.frames) != len(self.boxes):
            raise ValueError("frames and boxes must have equal length")


def load_kitti_track(root, sequence: int, track_id: int, category: str | None = None) -> SequenceSample:
    """Frames of one KITTI tracklet: ``root/velodyne/<seq>/<frame>.bin`` and ``root/label_02/<seq>.txt``."""
    root = Path(root)
    recs = read_tracking_labels(root / "label_02" / f"{sequence:04d}.txt", category, track_id)
    if not recs:
        raise FormatError(f"no labels for sequence {sequence} track {track_id}")
    recs.sort(key=lambda r: r.frame)
    frames = [read_pointcloud_bin(root / "velodyne" / f"{sequence:04d}" / f"{r.frame:06d}.bin") for r in recs]
    return SequenceSample(frames, [r.box for r in recs], recs[0].category, f"{sequence:04d}:{track_id}")


# -- synthetic sequences -------------------------------------------------------
@dataclass
class SynthSpec:
    """Target trajectory, clutter and noise for :func:`synth_sequence`.

    The target moves ``speed`` meters per frame along its heading, which
    turns by ``yaw_rate`` radians per frame.
    """

    frames: int = 20
    size: tuple[float, float, float] = (1.8, 4.2, 1.6)  # w, l, h
    start: tuple[float, float, float] = (0.0, 0.0, 0.0)
    heading: float = 0.0
    speed: float = 0.2
    yaw_rate: float = 0.0
    target_points: int = 400
    clutter_points: int = 600
    clutter_extent: float = 8.0
    noise: float = 0.0
    target_intensity: float = 0.9
    clutter_intensity: tuple[float, float] = (0.0, 0.5)
    seed: int = 0

    @classmethod
    def parse(cls, text: str) -> "SynthSpec":
        """Parse ``synthetic[:key=value,...]``; tuple values use ``/`` separators (``size=1.8/4.2/1.6``)."""
        m = re.fullmatch(r"synthetic(?::(.*))?", text.strip())
        if not m:
            raise ValueError(f"not a synthetic sequence spec: {text!r}")
        spec = cls()
        if m.group(1):
            for item in m.group(1).split(","):
                key, _, value = item.partition("=")
                key = key.strip()
                if not hasattr(spec, key):
                    raise ValueError(f"unknown synthetic key {key!r}")
                cur = getattr(spec, key)
                if isinstance(cur, tuple):
                    setattr(spec, key, tuple(float(v) for v in value.split("/")))
                elif isinstance(cur, int):
                    setattr(spec, key, int(value))
                else:
                    setattr(spec, key, float(value))
        return spec


def _surface_points(rng: np.random.Generator, w: float, l: float, h: float, n: int) -> np.ndarray:  # noqa: E741
    """Uniform samples on the four sides and the top of an axis-aligned box centered at 0."""
    areas = np.array([2 * w * h, 2 * l * h, l * w])
    choice = rng.choice(3, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, size=(n, 3)) * np.array([l, w, h])
    sign = rng.choice([-1.0, 1.0], size=n)
    pts = u.copy()
    pts[choice == 0, 0] = sign[choice == 0] * l / 2
    pts[choice == 1, 1] = sign[choice == 1] * w / 2
    pts[choice == 2, 2] = h / 2
    return pts


def synth_sequence(spec: SynthSpec, seed: int | None = None) -> SequenceSample:
    """A rigid box-shaped target moving through uniform clutter.

    Target surface points are drawn once in the object frame and carried
    rigidly, so a static noise-free target yields identical in-box points
    every frame. ``seed`` overrides ``spec.seed``.
    """
    if spec.frames < 1:
        raise ValueError("need at least one frame")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    w, l, h = spec.size  # noqa: E741
    body = _surface_points(rng, w, l, h, spec.target_points)
    body_int = np.full((spec.target_points, 1), spec.target_intensity)

    boxes = []
    pos = np.array(spec.start, dtype=float)
    heading = spec.heading
    for _ in range(spec.frames):
        boxes.append(Box3D(pos[0], pos[1], pos[2], w, l, h, heading))
        pos = pos + spec.speed * np.array([math.cos(heading), math.sin(heading), 0.0])
        heading += spec.yaw_rate

    centers = np.array([b.center for b in boxes])
    lo = centers.min(axis=0) - spec.clutter_extent
    hi = centers.max(axis=0) + spec.clutter_extent
    lo[2], hi[2] = spec.start[2] - h, spec.start[2] + h
    frames = []
    for box in boxes:
        tpts = canonical_to_world(body, box)
        if spec.noise > 0:
            tpts = tpts + rng.normal(0.0, spec.noise, size=tpts.shape)
        clutter = rng.uniform(lo, hi, size=(spec.clutter_points, 3))
        if len(clutter):
            # keep clutter out of the target volume so labels stay unambiguous
            clutter = clutter[~points_in_box(clutter, box)]
        cint = rng.uniform(*spec.clutter_intensity, size=(len(clutter), 1))
        frames.append(
            PointCloud(np.concatenate([tpts, clutter]), np.concatenate([body_int, cint]))
        )
    return SequenceSample(frames, boxes, "Car", "synthetic")


# -- tracker result files ------------------------------------------------------
def write_track_file(path, boxes: list[Box3D], flags: list[str] | None = None) -> None:
    """``# size w l h`` header, then ``frame_id x y z theta flags`` per frame."""
    flags = flags or ["-"] * len(boxes)
    lines = []
    if boxes:
        b = boxes[0]
        lines.append("# size " + " ".join(repr(float(v)) for v in (b.w, b.l, b.h)))
    for i, (b, f) in enumerate(zip(boxes, flags)):
        lines.append(f"{i} " + " ".join(repr(float(v)) for v in (b.x, b.y, b.z, b.theta)) + f" {f}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_track_file(path, size: tuple[float, float, float] | None = None) -> tuple[list[Box3D], list[str]]:
    """Inverse of :func:`write_track_file`; ``size`` overrides/supplies (w, l, h)."""
    boxes, flags = [], []
    hdr = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            parts = s[1:].split()
            if parts and parts[0] == "size":
                try:
                    hdr = tuple(float(v) for v in parts[1:4])
                except ValueError as exc:
                    raise FormatError(f"{path}:{lineno}: bad size header") from exc
            continue
        cols = s.split()
        if len(cols) != 6:
            raise FormatError(f"{path}:{lineno}: expected 6 columns 'frame x y z theta flags'")
        try:
            x, y, z, th = (float(v) for v in cols[1:5])
            int(cols[0])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
        dims = size or hdr
        if dims is None:
            raise FormatError(f"{path}:{lineno}: box size unknown (no '# size' header)")
        boxes.append(Box3D(x, y, z, dims[0], dims[1], dims[2], th))
        flags.append(cols[5])
    return boxes, flags
