"""Deterministic point-cloud primitives: resampling, FPS, ball query, kNN, set abstraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import MLP, Module, Tensor, concat, gather


class EmptyCloudError(ValueError):
    """An operation needed at least one point and got none."""


@dataclass(frozen=True)
class PointCloud:
    """Positions ``(N, 3)`` in meters plus per-point features ``(N, d)``."""

    positions: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats.reshape(len(pos), -1) if len(pos) else feats.reshape(0, 0)
        if feats.shape[0] != pos.shape[0]:
            raise ValueError(f"{pos.shape[0]} positions but {feats.shape[0]} feature rows")
        if not np.all(np.isfinite(pos)):
            raise ValueError("point positions must be finite")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "features", feats)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def take(self, idx) -> "PointCloud":
        return PointCloud(self.positions[idx], self.features[idx])

    @staticmethod
    def concatenate(clouds: list["PointCloud"]) -> "PointCloud":
        return PointCloud(
            np.concatenate([c.positions for c in clouds]), np.concatenate([c.features for c in clouds])
        )


def resample(pc: PointCloud, n: int, seed) -> PointCloud:
    """Exactly ``n`` points: a random subset if there are enough, else all plus random duplicates."""
    if len(pc) == 0:
        raise EmptyCloudError("cannot resample an empty cloud")
    rng = np.random.default_rng(seed)
    if len(pc) >= n:
        idx = rng.choice(len(pc), size=n, replace=False)
    else:
        extra = rng.integers(0, len(pc), size=n - len(pc))
        idx = np.concatenate([np.arange(len(pc)), extra])
        idx = idx[rng.permutation(n)]
    return pc.take(idx)


def _sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = a[:, None, :] - b[None, :, :]
    return d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]


def fps(positions: np.ndarray, m: int, start: int = 0) -> np.ndarray:
    """Farthest point sampling.

    Greedy max-min selection starting at ``start``; ties go to the lowest
    index and already-selected points are never picked again.
    """
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    if m > n:
        raise ValueError(f"fps: cannot select {m} of {n} points")
    if not 0 <= start < n:
        raise ValueError(f"fps: start index {start} out of range")
    selected = np.empty(m, dtype=np.int64)
    if m == 0:
        return selected
    mind = np.full(n, np.inf)
    taken = np.zeros(n, dtype=bool)
    cur = start
    for i in range(m):
        selected[i] = cur
        taken[cur] = True
        d = positions - positions[cur]
        mind = np.minimum(mind, d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2])
        cand = np.where(taken, -1.0, mind)
        cur = int(np.argmax(cand))
    return selected


def ball_query(centers: np.ndarray, positions: np.ndarray, radius: float, cap: int) -> np.ndarray:
    """Up to ``cap`` in-radius indices per center, ascending.

    Short rows are padded with their first hit; a center with no point in
    range gets its nearest point repeated.
    """
    if radius <= 0 or cap < 1:
        raise ValueError("ball_query needs radius > 0 and cap >= 1")
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    d2 = _sqdist(centers, positions)
    inside = d2 <= radius * radius
    order = np.argsort(~inside, axis=1, kind="stable")[:, :cap]
    counts = np.minimum(inside.sum(axis=1), cap)
    first = np.where(counts > 0, order[:, 0], np.argmin(d2, axis=1))
    slot = np.arange(order.shape[1])[None, :]
    out = np.where(slot < counts[:, None], order, first[:, None])
    if out.shape[1] < cap:
        out = np.concatenate([out, np.repeat(first[:, None], cap - out.shape[1], axis=1)], axis=1)
    return out.astype(np.int64)


def knn(queries: np.ndarray, positions: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest positions per query, nearest first, ties by lowest index."""
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if k > positions.shape[0]:
        raise ValueError(f"knn: k={k} exceeds {positions.shape[0]} points")
    if k < 1:
        raise ValueError("knn: k must be >= 1")
    d2 = _sqdist(queries, positions)
    return np.argsort(d2, axis=1, kind="stable")[:, :k].astype(np.int64)


@dataclass
class FeatureSet:
    """Positions ``(N, 3)`` with a feature tensor ``(N, C)``."""

    positions: np.ndarray
    features: Tensor

    def __len__(self) -> int:
        return self.positions.shape[0]


class SetAbstraction(Module):
    """Sample (FPS), group (ball query), embed (2-layer pointwise MLP), max-pool.

    Each neighbor contributes ``[p_j - p_center, f_j]``.
    """

    def __init__(self, cin: int, cout: int, npoint: int, radius: float, nsample: int, rng, dtype=np.float64):
        super().__init__()
        self.npoint = npoint
        self.radius = radius
        self.nsample = nsample
        self.mlp = MLP([3 + cin, cout, cout], rng, final_relu=True, dtype=dtype)

    def forward(self, positions: np.ndarray, features: Tensor, start: int = 0) -> FeatureSet:
        centers_idx = fps(positions, self.npoint, start)
        centers = positions[centers_idx]
        group = ball_query(centers, positions, self.radius, self.nsample)
        rel = (positions[group] - centers[:, None, :]).astype(features.dtype)
        grouped = concat([Tensor(rel), gather(features, group)], axis=-1)
        out = self.mlp(grouped).max(axis=1)
        return FeatureSet(centers, out)
