"""Three-stage encoder, lateral correlation pyramid and voxelization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attention import CrossAttention, SelfAttention
from .config import EncoderConfig, VoxelConfig
from .numerics import BatchNorm, Linear, Module, Tensor, concat, gather, relu
from .numerics.functional import scatter_mean
from .pointops import FeatureSet, PointCloud, SetAbstraction


@dataclass(frozen=True)
class GridGeometry:
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    z_range: tuple[float, float]
    voxel_size: tuple[float, float, float]

    @classmethod
    def from_config(cls, cfg: VoxelConfig) -> "GridGeometry":
        return cls(tuple(cfg.x_range), tuple(cfg.y_range), tuple(cfg.z_range), tuple(cfg.voxel_size))

    @staticmethod
    def _cells(lo: float, hi: float, v: float) -> int:
        # 1e-9 absorbs binary representation error, e.g. 7.2 / 0.3 -> 23.999...
        return int(math.floor((hi - lo) / v + 1e-9)) + 1

    @property
    def W(self) -> int:
        return self._cells(*self.x_range, self.voxel_size[0])

    @property
    def L(self) -> int:
        return self._cells(*self.y_range, self.voxel_size[1])

    @property
    def H(self) -> int:
        return self._cells(*self.z_range, self.voxel_size[2])

    @property
    def mins(self) -> np.ndarray:
        return np.array([self.x_range[0], self.y_range[0], self.z_range[0]])

    @property
    def maxs(self) -> np.ndarray:
        return np.array([self.x_range[1], self.y_range[1], self.z_range[1]])


@dataclass
class VoxelGrid:
    """Volumetric features ``data`` of shape ``(C, H, L, W)``.

    ``occupancy`` is ``(H, L, W)``; ``mean_positions`` holds the averaged
    point coordinates per voxel (diagnostic only); ``dropped`` counts input
    points outside the extents.
    """

    data: Tensor
    geometry: GridGeometry
    occupancy: np.ndarray
    counts: np.ndarray
    mean_positions: np.ndarray = field(repr=False)
    dropped: int = 0


def voxel_indices(positions: np.ndarray, geom: GridGeometry) -> tuple[np.ndarray, np.ndarray]:
    """``(keep_mask, (ix, iy, iz) for kept points)``; upper bounds are exclusive."""
    pos = np.asarray(positions, dtype=np.float64)
    keep = np.all((pos >= geom.mins) & (pos < geom.maxs), axis=1)
    idx = np.floor((pos[keep] - geom.mins) / np.asarray(geom.voxel_size)).astype(np.int64)
    idx = np.minimum(idx, np.array([geom.W, geom.L, geom.H]) - 1)
    return keep, idx


def voxelize(fs: FeatureSet, geom: GridGeometry) -> VoxelGrid:
    """Average point features falling into each voxel bin."""
    keep, idx = voxel_indices(fs.positions, geom)
    H, L, W = geom.H, geom.L, geom.W
    flat = (idx[:, 2] * L + idx[:, 1]) * W + idx[:, 0]
    kept_rows = np.flatnonzero(keep)
    feats = fs.features
    if len(kept_rows) != len(fs):
        feats = gather(feats, kept_rows)
    c = feats.shape[1]
    means, counts = scatter_mean(feats, flat, H * L * W)
    data = means.reshape(H, L, W, c).transpose(3, 0, 1, 2)
    pos_sum = np.zeros((H * L * W, 3))
    np.add.at(pos_sum, flat, fs.positions[keep])
    mean_pos = (pos_sum / np.maximum(counts, 1)[:, None]).reshape(H, L, W, 3)
    return VoxelGrid(
        data=data,
        geometry=geom,
        occupancy=(counts > 0).reshape(H, L, W),
        counts=counts.reshape(H, L, W),
        mean_positions=mean_pos,
        dropped=int((~keep).sum()),
    )


class PointConvBlock(Module):
    """Pointwise 1D conv -> BN -> ReLU -> pointwise 1D conv."""

    def __init__(self, cin: int, cout: int, rng, dtype=np.float64):
        super().__init__()
        self.conv1 = Linear(cin, cout, rng, dtype=dtype)
        self.bn = BatchNorm(cout, dtype=dtype)
        self.conv2 = Linear(cout, cout, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv2(relu(self.bn(self.conv1(x))))


class CorrelationPyramid(Module):
    """Unify each selected stage to a common width, then stack along the point axis."""

    def __init__(self, stage_channels: dict[int, int], out_channels: int, rng, dtype=np.float64):
        super().__init__()
        self.stages = sorted(stage_channels)
        self.blocks = [PointConvBlock(stage_channels[s], out_channels, rng, dtype) for s in self.stages]

    def forward(self, stage_sets: dict[int, FeatureSet]) -> FeatureSet:
        feats, pos = [], []
        for s, block in zip(self.stages, self.blocks):
            feats.append(block(stage_sets[s].features))
            pos.append(stage_sets[s].positions)
        return FeatureSet(np.concatenate(pos), concat(feats, axis=0))


class Stage(Module):
    def __init__(self, cin: int, cout: int, npoint: int, radius: float, nsample: int, k: int, use_sa: bool, use_ca: bool, rng, dtype):
        super().__init__()
        self.abstraction = SetAbstraction(cin, cout, npoint, radius, nsample, rng, dtype)
        self.sa = SelfAttention(cout, k, rng, dtype) if use_sa else None
        self.ca = CrossAttention(cout, k, rng, dtype) if use_ca else None

    def forward(self, template: FeatureSet, search: FeatureSet, starts=(0, 0)) -> tuple[FeatureSet, FeatureSet]:
        t = self.abstraction(template.positions, template.features, starts[0])
        s = self.abstraction(search.positions, search.features, starts[1])
        tf, sf = t.features, s.features
        if self.sa is not None:
            tf = self.sa(tf, t.positions)
            sf = self.sa(sf, s.positions)
        if self.ca is not None:
            sf, tf = self.ca(sf, s.positions, tf, t.positions)
        return FeatureSet(t.positions, tf), FeatureSet(s.positions, sf)


@dataclass
class EncoderOutput:
    search_stages: list[FeatureSet]
    template_stages: list[FeatureSet]
    pyramid: FeatureSet


class Encoder(Module):
    """Set abstraction -> self-attention -> cross-attention per stage, plus the pyramid.

    Every stage's modules are shared between the template and search
    streams, so a checkpoint holds one copy of each.
    """

    def __init__(self, cfg: EncoderConfig, in_features: int, rng, dtype=np.float64):
        super().__init__()
        self.cfg = cfg
        stages = []
        cin = in_features
        for i, (npoint, radius, cout) in enumerate(zip(cfg.stage_points, cfg.radii, cfg.channels), start=1):
            stages.append(
                Stage(cin, cout, npoint, radius, cfg.nsample, cfg.k, i in cfg.sa_stages, i in cfg.ca_stages, rng, dtype)
            )
            cin = cout
        self.stages = stages
        self.pyramid = CorrelationPyramid(
            {s: cfg.channels[s - 1] for s in cfg.pyramid_stages}, cfg.pyramid_channels, rng, dtype
        )
        self.dtype = dtype

    def forward(self, template: PointCloud, search: PointCloud, rng: np.random.Generator | None = None) -> EncoderOutput:
        t = FeatureSet(template.positions, Tensor(template.features.astype(self.dtype)))
        s = FeatureSet(search.positions, Tensor(search.features.astype(self.dtype)))
        t_out, s_out = [], []
        for stage in self.stages:
            if self.training and rng is not None:
                starts = (int(rng.integers(len(t))), int(rng.integers(len(s))))
            else:
                starts = (0, 0)
            t, s = stage(t, s, starts)
            t_out.append(t)
            s_out.append(s)
        pyr = self.pyramid({i: s_out[i - 1] for i in self.cfg.pyramid_stages})
        return EncoderOutput(s_out, t_out, pyr)
