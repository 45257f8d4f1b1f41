"""Fused differentiable kernels: linear, N-d convolution, batch norm, scatter-mean.

All spatial kernels are channels-last: ``x`` has shape ``(B, *spatial, C)``.
"""

from __future__ import annotations

import itertools

import numpy as np

from .tensor import DimensionError, Tensor, _make, _unbroadcast


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``y = x W^T + b`` over the last axis; ``weight`` is (out, in)."""
    if x.shape[-1] != weight.shape[1]:
        raise DimensionError(f"linear: input width {x.shape[-1]} != weight in-features {weight.shape[1]}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ weight.data.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(lead + (weight.shape[0],))
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(-1, weight.shape[0])
        grads = [
            (x, (g2 @ weight.data).reshape(x.shape) if x.requires_grad else None),
            (weight, g2.T @ x2 if weight.requires_grad else None),
        ]
        if bias is not None:
            grads.append((bias, g2.sum(axis=0)))
        return grads

    return _make(out, parents, backward)


def conv(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Cross-correlation with "same" zero padding.

    Args:
        x: ``(B, *spatial, Cin)`` with 1 to 3 spatial axes.
        weight: ``(Cout, Cin, *kernel)``; every kernel extent must be odd.
        bias: ``(Cout,)`` or None.

    Returns:
        ``(B, *spatial, Cout)``.
    """
    nsp = weight.ndim - 2
    if x.ndim != nsp + 2:
        raise DimensionError(f"conv: input ndim {x.ndim} does not match {nsp}-d kernel")
    cout, cin = weight.shape[:2]
    if x.shape[-1] != cin:
        raise DimensionError(f"conv: input channels {x.shape[-1]} != kernel in-channels {cin}")
    ksize = weight.shape[2:]
    if any(k % 2 == 0 for k in ksize):
        raise DimensionError("conv: same padding needs odd kernel extents")
    spatial = x.shape[1:-1]
    pads = [k // 2 for k in ksize]
    xp = np.pad(x.data, [(0, 0)] + [(p, p) for p in pads] + [(0, 0)])
    offsets = list(itertools.product(*[range(k) for k in ksize]))
    # w_taps[o] is the (Cin, Cout) matrix for kernel offset o
    w_taps = np.ascontiguousarray(np.moveaxis(weight.data.reshape(cout, cin, -1), -1, 0).transpose(0, 2, 1))

    def window(arr, off):
        sl = (slice(None),) + tuple(slice(o, o + n) for o, n in zip(off, spatial)) + (slice(None),)
        return arr[sl]

    rows = int(np.prod(x.shape[:-1]))
    out = np.zeros((rows, cout), dtype=x.dtype)
    for t, off in enumerate(offsets):
        out += np.ascontiguousarray(window(xp, off)).reshape(rows, cin) @ w_taps[t]
    out = out.reshape(x.shape[:-1] + (cout,))
    if bias is not None:
        out += bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gx = gw = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            g2 = g.reshape(-1, cout)
            for t, off in enumerate(offsets):
                window(gxp, off)[...] += (g2 @ w_taps[t].T).reshape(x.shape)
            crop = (slice(None),) + tuple(slice(p, p + n) for p, n in zip(pads, spatial)) + (slice(None),)
            gx = gxp[crop]
        if weight.requires_grad:
            g2 = g.reshape(-1, cout)
            taps = np.empty((len(offsets), cin, cout), dtype=x.dtype)
            for t, off in enumerate(offsets):
                taps[t] = np.ascontiguousarray(window(xp, off)).reshape(-1, cin).T @ g2
            gw = np.moveaxis(taps.transpose(0, 2, 1), 0, -1).reshape(weight.shape)
        grads = [(x, gx), (weight, gw)]
        if bias is not None:
            grads.append((bias, g.reshape(-1, cout).sum(axis=0)))
        return grads

    return _make(out, parents, backward)


def batch_norm(
    x: Tensor,
    scale: Tensor,
    shift: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Normalize over every axis but the last (channels-last).

    In training mode the batch statistics are used and the running buffers
    are updated in place; in eval mode the running buffers are used.
    """
    c = x.shape[-1]
    if scale.shape != (c,):
        raise DimensionError(f"batch_norm: {c} channels vs scale {scale.shape}")
    axes = tuple(range(x.ndim - 1))
    n = x.size // c
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        unbiased = var * n / max(n - 1, 1)
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        mu = running_mean.astype(x.dtype)
        var = running_var.astype(x.dtype)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * scale.data + shift.data

    def backward(g):
        gscale = (g * xhat).sum(axis=axes)
        gshift = g.sum(axis=axes)
        gx = None
        if x.requires_grad:
            gxhat = g * scale.data
            if training:
                gx = inv / n * (n * gxhat - gxhat.sum(axis=axes) - xhat * (gxhat * xhat).sum(axis=axes))
            else:
                gx = gxhat * inv
        return ((x, gx), (scale, gscale), (shift, gshift))

    return _make(out, (x, scale, shift), backward)


def scatter_mean(values: Tensor, index: np.ndarray, size: int) -> tuple[Tensor, np.ndarray]:
    """Average rows of ``values`` into ``size`` bins.

    Args:
        values: ``(N, C)``.
        index: ``(N,)`` integer bin per row, each in ``[0, size)``.
        size: number of bins.

    Returns:
        ``(size, C)`` tensor of per-bin means (zero for empty bins) and the
        ``(size,)`` per-bin counts.
    """
    index = np.asarray(index, dtype=np.int64)
    if values.ndim != 2 or index.shape != (values.shape[0],):
        raise DimensionError("scatter_mean expects (N, C) values and (N,) index")
    counts = np.bincount(index, minlength=size)
    sums = np.zeros((size, values.shape[1]), dtype=values.dtype)
    np.add.at(sums, index, values.data)
    denom = np.maximum(counts, 1).astype(values.dtype)[:, None]
    out = sums / denom

    def backward(g):
        return ((values, (g / denom)[index]),)

    return _make(out, (values,), backward), counts


def broadcast_to(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    return _make(np.broadcast_to(x.data, shape).copy(), (x,), lambda g: ((x, _unbroadcast(g, x.shape)),))
