"""Run configuration: typed sections with defaults, loaded from INI-style text.

Every key must belong to a known section and field; unknown keys and
malformed values raise :class:`ConfigError` naming the offending entry.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import typing
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    template_points: int = 1024
    search_points: int = 1024
    point_features: int = 1
    root: str = ""
    category: str = "Car"


@dataclass
class EncoderConfig:
    stage_points: tuple[int, ...] = (512, 256, 128)
    radii: tuple[float, ...] = (0.3, 0.5, 0.7)
    channels: tuple[int, ...] = (64, 128, 256)
    nsample: int = 32
    k: int = 32
    sa_stages: tuple[int, ...] = (1, 2, 3)
    ca_stages: tuple[int, ...] = (1, 2, 3)
    pyramid_stages: tuple[int, ...] = (1, 2, 3)
    pyramid_channels: int = 64


@dataclass
class VoxelConfig:
    x_range: tuple[float, ...] = (-5.6, 5.6)
    y_range: tuple[float, ...] = (-3.6, 3.6)
    z_range: tuple[float, ...] = (-2.4, 2.4)
    voxel_size: tuple[float, ...] = (0.3, 0.3, 0.3)


@dataclass
class DecoderConfig:
    blocks: int = 3
    conv_mode: str = "decomposed"
    z_head: bool = True
    bev_blocks: int = 3
    z_blocks: int = 3
    kernel: int = 3


@dataclass
class LossConfig:
    lambda_cls: float = 1.0
    lambda_reg: float = 1.0
    label_radius: float = 2.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    neg_power: float = 4.0


@dataclass
class TrainConfig:
    lr: float = 0.001
    lr_decay: float = 0.2
    decay_every: int = 6
    epochs: int = 20
    steps_per_epoch: int = 0
    seed: int = 0
    shift_xy: float = 0.3
    shift_z: float = 0.1
    search_enlarge: float = 2.0
    dtype: str = "float32"


@dataclass
class TrackerConfig:
    search_enlarge: float = 2.0
    lost_scale: float = 1.5
    seed: int = 0


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    voxel: VoxelConfig = field(default_factory=VoxelConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)

    def validate(self) -> "RunConfig":
        enc = self.encoder
        n = len(enc.stage_points)
        if not (len(enc.radii) == len(enc.channels) == n):
            raise ConfigError("encoder.stage_points, radii and channels must have equal length")
        if any(a <= b for a, b in zip(enc.stage_points, enc.stage_points[1:])):
            raise ConfigError("encoder.stage_points must be strictly decreasing")
        if any(r <= 0 for r in enc.radii) or any(a >= b for a, b in zip(enc.radii, enc.radii[1:])):
            raise ConfigError("encoder.radii must be positive and increasing")
        if enc.stage_points[0] > self.data.search_points or enc.stage_points[0] > self.data.template_points:
            raise ConfigError("first stage cannot sample more points than the input clouds hold")
        if enc.k < 1 or enc.k > enc.stage_points[-1]:
            raise ConfigError("encoder.k must be in [1, last stage points]")
        for name in ("sa_stages", "ca_stages", "pyramid_stages"):
            stages = getattr(enc, name)
            if any(s < 1 or s > n for s in stages):
                raise ConfigError(f"encoder.{name} entries must be in 1..{n}")
        if not enc.pyramid_stages:
            raise ConfigError("encoder.pyramid_stages cannot be empty")
        for name in ("x_range", "y_range", "z_range"):
            lo, hi = getattr(self.voxel, name)
            if not lo < hi:
                raise ConfigError(f"voxel.{name} must satisfy min < max")
        if len(self.voxel.voxel_size) != 3 or any(v <= 0 for v in self.voxel.voxel_size):
            raise ConfigError("voxel.voxel_size must be three positive values")
        if self.decoder.conv_mode not in ("decomposed", "3d"):
            raise ConfigError("decoder.conv_mode must be 'decomposed' or '3d'")
        if self.decoder.kernel % 2 == 0:
            raise ConfigError("decoder.kernel must be odd")
        if min(self.decoder.blocks, self.decoder.bev_blocks, self.decoder.z_blocks) < 1:
            raise ConfigError("decoder depths must be >= 1")
        if self.loss.lambda_cls < 0 or self.loss.lambda_reg < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.train.dtype not in ("float32", "float64"):
            raise ConfigError("train.dtype must be float32 or float64")
        return self

    def to_text(self) -> str:
        """Canonical INI text; ``from_text(cfg.to_text()) == cfg``."""
        lines = []
        for section in dataclasses.fields(self):
            lines.append(f"[{section.name}]")
            sub = getattr(self, section.name)
            for f in dataclasses.fields(sub):
                lines.append(f"{f.name} = {_format(getattr(sub, f.name))}")
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> bytes:
        return hashlib.sha256(self.to_text().encode("utf-8")).digest()


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _parse(raw: str, typ, where: str):
    origin = typing.get_origin(typ)
    try:
        if origin is tuple:
            (inner, _) = typing.get_args(typ)
            items = [s.strip() for s in raw.split(",") if s.strip()]
            return tuple(_parse(s, inner, where) for s in items)
        if typ is bool:
            low = raw.strip().lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {getattr(typ, '__name__', typ)}") from exc


def from_text(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    cfg = RunConfig()
    sections = {f.name: f for f in dataclasses.fields(cfg)}
    for name in parser.sections():
        if name not in sections:
            raise ConfigError(f"unknown section [{name}]")
        sub = getattr(cfg, name)
        hints = typing.get_type_hints(type(sub))
        known = {f.name for f in dataclasses.fields(sub)}
        for key, raw in parser.items(name):
            if key not in known:
                raise ConfigError(f"unknown key {name}.{key}")
            setattr(sub, key, _parse(raw, hints[key], f"{name}.{key}"))
    return cfg.validate()


def load_config(path) -> RunConfig:
    return from_text(Path(path).read_text())


def default_config() -> RunConfig:
    return RunConfig().validate()


def toy_config() -> RunConfig:
    """A small geometry-preserving variant for fast tests: narrow channels, few points."""
    cfg = RunConfig()
    cfg.data.template_points = 64
    cfg.data.search_points = 64
    cfg.encoder.stage_points = (32, 16, 8)
    cfg.encoder.channels = (8, 8, 16)
    cfg.encoder.nsample = 8
    cfg.encoder.k = 4
    cfg.encoder.radii = (0.6, 1.0, 1.6)
    cfg.encoder.pyramid_channels = 8
    cfg.voxel.x_range = (-1.2, 1.2)
    cfg.voxel.y_range = (-0.9, 0.9)
    cfg.voxel.z_range = (-0.6, 0.6)
    cfg.voxel.voxel_size = (0.3, 0.3, 0.3)
    return cfg.validate()

