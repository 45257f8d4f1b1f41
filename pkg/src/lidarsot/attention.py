"""Local vector attention and the self-/cross-attention modules built on it."""

from __future__ import annotations

import numpy as np

from .numerics import MLP, Linear, Module, Tensor, gather, softmax
from .pointops import knn


class VectorAttention(Module):
    """Per-channel softmax attention over the k nearest key points.

    For query point i with neighbors j in the key/value source::

        e_ij  = f_e(p_i - p_j)
        a_ij  = f_a(q_i - k_j + e_ij) / sqrt(k)
        out_i = sum_j softmax_j(a_ij) * (v_j + e_ij)
    """

    def __init__(self, channels: int, k: int, rng, dtype=np.float64):
        super().__init__()
        self.k = k
        self.f_q = Linear(channels, channels, rng, dtype=dtype)
        self.f_k = Linear(channels, channels, rng, dtype=dtype)
        self.f_v = Linear(channels, channels, rng, dtype=dtype)
        self.f_e = Linear(3, channels, rng, dtype=dtype)
        self.f_a = MLP([channels, channels, channels], rng, dtype=dtype)

    def forward(
        self,
        q_feat: Tensor,
        q_pos: np.ndarray,
        kv_feat: Tensor,
        kv_pos: np.ndarray,
        return_weights: bool = False,
    ):
        if kv_pos.shape[0] < self.k:
            raise ValueError(f"attention needs >= {self.k} key points, got {kv_pos.shape[0]}")
        nbr = knn(q_pos, kv_pos, self.k)
        rel = (q_pos[:, None, :] - kv_pos[nbr]).astype(q_feat.dtype)
        e = self.f_e(Tensor(rel))
        q = self.f_q(q_feat)
        keys = gather(self.f_k(kv_feat), nbr)
        vals = gather(self.f_v(kv_feat), nbr)
        n, c = q.shape
        logits = self.f_a(q.reshape(n, 1, c) - keys + e) * (1.0 / np.sqrt(self.k))
        weights = softmax(logits, axis=1)
        out = (weights * (vals + e)).sum(axis=1)
        if return_weights:
            return out, weights, nbr
        return out


class AttentionModule(Module):
    """``y = f_2(attn(f_1(x))) + x``; cross-attention when a partner source is given."""

    def __init__(self, channels: int, k: int, rng, dtype=np.float64):
        super().__init__()
        self.f1 = Linear(channels, channels, rng, dtype=dtype)
        self.attn = VectorAttention(channels, k, rng, dtype=dtype)
        self.f2 = Linear(channels, channels, rng, dtype=dtype)

    def forward(self, x: Tensor, pos: np.ndarray, partner_x: Tensor | None = None, partner_pos=None) -> Tensor:
        xbar = self.f1(x)
        if partner_x is None:
            xhat = self.attn(xbar, pos, xbar, pos)
        else:
            xhat = self.attn(xbar, pos, self.f1(partner_x), partner_pos)
        return self.f2(xhat) + x


class SelfAttention(AttentionModule):
    """Queries, keys, values and neighborhoods all from one stream."""

    def forward(self, x: Tensor, pos: np.ndarray) -> Tensor:
        return super().forward(x, pos)


class CrossAttention(AttentionModule):
    """One parameter set applied in both directions between search and template."""

    def forward(self, xs: Tensor, ps: np.ndarray, xt: Tensor, pt: np.ndarray) -> tuple[Tensor, Tensor]:
        xbar_s = self.f1(xs)
        xbar_t = self.f1(xt)
        ys = self.f2(self.attn(xbar_s, ps, xbar_t, pt)) + xs
        yt = self.f2(self.attn(xbar_t, pt, xbar_s, ps)) + xt
        return ys, yt
