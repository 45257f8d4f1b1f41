"""Single-object tracking in LiDAR point clouds with a numpy autodiff backend.

The main entry points are re-exported here; see the submodules for the
building blocks (``numerics``, ``pointops``, ``attention``, ``encoder``,
``decoder``, ``supervision``, ``evalkit``).
"""

from .config import RunConfig, default_config, load_config, toy_config
from .dataio import SequenceSample, SynthSpec, synth_sequence
from .evalkit import aggregate, iou3d, ope_metrics
from .geometry import Box3D
from .model import PyramidTracker
from .pointops import PointCloud
from .tracker import TrackResult, track_sequence
from .training import Trainer

__version__ = "0.1.0"

__all__ = [
    "Box3D",
    "PointCloud",
    "PyramidTracker",
    "RunConfig",
    "SequenceSample",
    "SynthSpec",
    "TrackResult",
    "Trainer",
    "aggregate",
    "default_config",
    "iou3d",
    "load_config",
    "ope_metrics",
    "synth_sequence",
    "toy_config",
    "track_sequence",
]
