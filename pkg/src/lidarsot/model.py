"""The full tracker network: encoder -> voxelization -> decoder."""

from __future__ import annotations

import numpy as np

from .config import RunConfig
from .decoder import Decoder, HeadOutputs
from .encoder import Encoder, EncoderOutput, GridGeometry, VoxelGrid, voxelize
from .numerics import Module
from .pointops import PointCloud


class PyramidTracker(Module):
    def __init__(self, cfg: RunConfig, seed: int = 0, dtype=None):
        super().__init__()
        if dtype is None:
            dtype = np.dtype(cfg.train.dtype).type
        rng = np.random.default_rng(seed)
        self.config = cfg
        self.geometry = GridGeometry.from_config(cfg.voxel)
        self.encoder = Encoder(cfg.encoder, cfg.data.point_features, rng, dtype)
        self.decoder = Decoder(cfg.encoder.pyramid_channels, cfg.decoder, rng, dtype)
        self.dtype = dtype

    def forward(
        self, template: PointCloud, search: PointCloud, rng: np.random.Generator | None = None
    ) -> tuple[HeadOutputs, VoxelGrid, EncoderOutput]:
        enc = self.encoder(template, search, rng)
        grid = voxelize(enc.pyramid, self.geometry)
        return self.decoder(grid), grid, enc

    def parameter_breakdown(self) -> dict[str, int]:
        """Trainable parameter count per top-level block plus ``total``."""
        out: dict[str, int] = {}
        for name, p in self.named_parameters():
            parts = name.split(".")
            if parts[0] == "encoder" and parts[1] == "stages":
                key = f"encoder.stage{int(parts[2]) + 1}.{parts[3]}"
            elif parts[0] == "encoder":
                key = "encoder.pyramid"
            elif parts[1] == "heads":
                key = "decoder.heads"
            else:
                key = "decoder.blocks"
            out[key] = out.get(key, 0) + p.size
        out["total"] = sum(out.values())
        return out
