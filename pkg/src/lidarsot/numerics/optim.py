"""Adam with a step-decay learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .modules import Parameter


class MissingGradientError(RuntimeError):
    """An updatable parameter reached the optimizer without a gradient."""


def step_decay_lr(base_lr: float, epoch: int, gamma: float = 0.2, every: int = 6) -> float:
    """Learning rate at ``epoch`` (0-based): ``base_lr * gamma ** (epoch // every)``."""
    return base_lr * gamma ** (epoch // every)


@dataclass
class Adam:
    params: list[Parameter]
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.params = list(self.params)
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, allow_missing: bool = False) -> None:
        """Apply one update.

        A parameter with no gradient raises :class:`MissingGradientError`
        unless ``allow_missing`` (then it is treated as a zero gradient,
        e.g. a head disabled by an ablation toggle never sees a loss).
        """
        b1, b2 = self.betas
        self.step_count += 1
        t = self.step_count
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                if not allow_missing:
                    raise MissingGradientError(f"parameter #{i} {p.shape} has no gradient")
                g = np.zeros_like(p.data)
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            mhat = self.m[i] / (1 - b1**t)
            vhat = self.v[i] / (1 - b2**t)
            p.data = (p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype)
