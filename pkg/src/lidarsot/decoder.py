"""Motion-factorized decoder: conv blocks on the voxel grid, dual pooling, BEV and z heads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DecoderConfig
from .encoder import GridGeometry, VoxelGrid
from .geometry import Box3D, box_to_world
from .numerics import Conv, ConvBlock, Module, Tensor, sigmoid


class DecomposedBlock(Module):
    """2D conv block over each (L, W) slice, then a 1D conv block along H.

    Works on channels-last ``(H, L, W, C)``.
    """

    def __init__(self, cin: int, cout: int, kernel: int, rng, dtype=np.float64):
        super().__init__()
        self.bev = ConvBlock(cin, cout, (kernel, kernel), rng, dtype)
        self.vertical = ConvBlock(cout, cout, (kernel,), rng, dtype)

    def forward(self, x: Tensor) -> Tensor:
        x = self.bev(x)  # H acts as the batch axis
        H, L, W, C = x.shape
        cols = x.transpose(1, 2, 0, 3).reshape(L * W, H, C)
        cols = self.vertical(cols)
        return cols.reshape(L, W, H, C).transpose(2, 0, 1, 3)


class Conv3DBlock(Module):
    """Plain 3D conv -> BN -> ReLU on ``(H, L, W, C)``."""

    def __init__(self, cin: int, cout: int, kernel: int, rng, dtype=np.float64):
        super().__init__()
        self.block = ConvBlock(cin, cout, (kernel, kernel, kernel), rng, dtype)

    def forward(self, x: Tensor) -> Tensor:
        H, L, W, C = x.shape
        out = self.block(x.reshape(1, H, L, W, C))
        return out.reshape(H, L, W, out.shape[-1])


def dual_pool(x: Tensor) -> tuple[Tensor, Tensor]:
    """Max over the vertical axis and over the horizontal plane.

    Args:
        x: ``(C, H, L, W)``.

    Returns:
        ``(C, L, W)`` bird's-eye features and ``(C, H)`` vertical features.
    """
    return x.max(axis=1), x.max(axis=(2, 3))


def _pool_channels_last(x: Tensor) -> tuple[Tensor, Tensor]:
    return x.max(axis=0), x.max(axis=(1, 2))


REG_INIT_SCALE = 0.01


@dataclass
class HeadOutputs:
    """Per-frame predictions.

    ``bev_reg`` channels are (dx, dy, theta) in voxel units / radians, plus
    an absolute z in meters as a fourth channel when the z head is off.
    ``z_cls`` / ``z_reg`` are None in that case.
    """

    bev_cls: Tensor  # (L, W) probabilities
    bev_reg: Tensor  # (3 or 4, L, W)
    z_cls: Tensor | None  # (H,)
    z_reg: Tensor | None  # (1, H)


class Heads(Module):
    def __init__(self, channels: int, cfg: DecoderConfig, rng, dtype=np.float64):
        super().__init__()
        k = cfg.kernel
        self.z_head = cfg.z_head
        self.bev_blocks = [ConvBlock(channels, channels, (k, k), rng, dtype) for _ in range(cfg.bev_blocks)]
        self.bev_cls = Conv(channels, 1, (1, 1), rng, dtype)
        self.bev_reg = Conv(channels, 3 if cfg.z_head else 4, (1, 1), rng, dtype)
        if cfg.z_head:
            self.z_blocks = [ConvBlock(channels, channels, (k,), rng, dtype) for _ in range(cfg.z_blocks)]
            self.z_cls = Conv(channels, 1, (1,), rng, dtype)
            self.z_reg = Conv(channels, 1, (1,), rng, dtype)
        # regression targets are small offsets around zero: start the heads near zero output
        for conv in (self.bev_reg, getattr(self, "z_reg", None)):
            if conv is not None:
                conv.weight.data *= REG_INIT_SCALE
                conv.bias.data[:] = 0.0

    def forward(self, bev: Tensor, vert: Tensor | None) -> HeadOutputs:
        """``bev`` is ``(L, W, C)``; ``vert`` is ``(H, C)``."""
        L, W, C = bev.shape
        b = bev.reshape(1, L, W, C)
        for blk in self.bev_blocks:
            b = blk(b)
        cls = sigmoid(self.bev_cls(b).reshape(L, W))
        reg = self.bev_reg(b).reshape(L, W, -1).transpose(2, 0, 1)
        if not self.z_head:
            return HeadOutputs(cls, reg, None, None)
        H = vert.shape[0]
        z = vert.reshape(1, H, C)
        for blk in self.z_blocks:
            z = blk(z)
        zc = sigmoid(self.z_cls(z).reshape(H))
        zr = self.z_reg(z).reshape(1, H)
        return HeadOutputs(cls, reg, zc, zr)


class Decoder(Module):
    def __init__(self, channels: int, cfg: DecoderConfig, rng, dtype=np.float64):
        super().__init__()
        self.cfg = cfg
        block = DecomposedBlock if cfg.conv_mode == "decomposed" else Conv3DBlock
        self.blocks = [block(channels, channels, cfg.kernel, rng, dtype) for _ in range(cfg.blocks)]
        self.heads = Heads(channels, cfg, rng, dtype)

    def forward(self, grid: VoxelGrid) -> HeadOutputs:
        x = grid.data.transpose(1, 2, 3, 0)  # (H, L, W, C)
        for blk in self.blocks:
            x = blk(x)
        bev, vert = _pool_channels_last(x)
        return self.heads(bev, vert if self.cfg.z_head else None)


def decode_box(heads: HeadOutputs, geom: GridGeometry, prev: Box3D) -> Box3D:
    """Peak-plus-offset decoding in the canonical frame of ``prev``, mapped back to world.

    The size (w, l, h) is copied from ``prev``. Ties in the heatmaps go to
    the lowest row-major index.
    """
    cls = np.asarray(heads.bev_cls.data if isinstance(heads.bev_cls, Tensor) else heads.bev_cls)
    reg = np.asarray(heads.bev_reg.data if isinstance(heads.bev_reg, Tensor) else heads.bev_reg)
    i, j = np.unravel_index(int(np.argmax(cls)), cls.shape)
    vx, vy, vz = geom.voxel_size
    x = float(geom.x_range[0] + (j + reg[0, i, j]) * vx)
    y = float(geom.y_range[0] + (i + reg[1, i, j]) * vy)
    theta = float(reg[2, i, j])
    if heads.z_cls is not None:
        zc = np.asarray(heads.z_cls.data if isinstance(heads.z_cls, Tensor) else heads.z_cls)
        zr = np.asarray(heads.z_reg.data if isinstance(heads.z_reg, Tensor) else heads.z_reg)
        h = int(np.argmax(zc))
        z = float(geom.z_range[0] + (h + zr[0, h]) * vz)
    else:
        z = float(reg[3, i, j])
    local = Box3D(x, y, z, prev.w, prev.l, prev.h, theta)
    return box_to_world(local, prev)
