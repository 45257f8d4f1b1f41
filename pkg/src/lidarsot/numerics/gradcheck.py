"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import NumericError, Tensor


def grad_check(
    f: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between backprop and central differences.

    ``f`` is re-evaluated with each coordinate of each input nudged by
    ``±eps`` in place. The error per coordinate is
    ``|analytic - numeric| / max(1, |analytic|)``.

    Args:
        f: zero-argument closure returning a scalar tensor.
        inputs: leaf tensors (requires_grad) that ``f`` reads.
        eps: perturbation size.
        max_coords: if given, check at most this many randomly drawn
            coordinates per input instead of all of them.
        rng: generator for the coordinate draw.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    for x in inputs:
        x.data = np.ascontiguousarray(x.data)
        x.grad = None
    out = f()
    if out.size != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    out.backward()
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in inputs]
    rng = rng or np.random.default_rng(0)

    worst = 0.0
    for x, ga in zip(inputs, analytic):
        flat = x.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            fp = float(f().data)
            flat[c] = orig - eps
            fm = float(f().data)
            flat[c] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError("non-finite value under perturbation")
            numeric = (fp - fm) / (2 * eps)
            a = float(ga.reshape(-1)[c])
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst
