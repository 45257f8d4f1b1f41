"""Training loop: sample augmented pairs, compute the objective, take Adam steps."""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from .dataio import SequenceSample
from .model import PyramidTracker
from .numerics import Adam, step_decay_lr
from .regions import EmptyRegionError
from .supervision import augment, construct_labels, format_breakdown, total_loss

log = logging.getLogger(__name__)


class Trainer:
    def __init__(self, model: PyramidTracker, sequences: list[SequenceSample], seed: int | None = None, lr: float | None = None):
        self.model = model
        self.cfg = model.config
        self.sequences = [s for s in sequences if len(s.frames) >= 2]
        if not self.sequences:
            raise ValueError("training needs at least one sequence with two or more frames")
        self.rng = np.random.default_rng(self.cfg.train.seed if seed is None else seed)
        self.base_lr = self.cfg.train.lr if lr is None else lr
        self.opt = Adam(model.parameters(), lr=self.base_lr)
        self.step_count = 0
        pairs = sum(len(seq.frames) - 1 for seq in self.sequences)
        self.steps_per_epoch = self.cfg.train.steps_per_epoch or pairs
        self.skipped = 0
        self.history: list[dict[str, float]] = []

    def epoch_of(self, step: int) -> int:
        """Epoch index of ``step``; an epoch is ``train.steps_per_epoch`` steps, or one pass over all frame pairs when that is 0."""
        return step // self.steps_per_epoch

    def sample(self):
        while True:
            seq = self.sequences[int(self.rng.integers(len(self.sequences)))]
            t = int(self.rng.integers(1, len(seq.frames)))
            try:
                return augment(seq.frames, seq.boxes, t, self.rng, self.cfg)
            except EmptyRegionError:
                self.skipped += 1
                if self.skipped > 1000:
                    raise

    def step(self, batch: int = 1) -> dict[str, float]:
        """One optimizer step over ``batch`` augmented samples (gradients averaged)."""
        model = self.model
        model.train()
        self.opt.lr = step_decay_lr(self.base_lr, self.epoch_of(self.step_count), self.cfg.train.lr_decay, self.cfg.train.decay_every)
        self.opt.zero_grad()
        agg: dict[str, float] = {}
        bev_z = not self.cfg.decoder.z_head
        for _ in range(batch):
            s = self.sample()
            heads, _, _ = model(s.template, s.search, self.rng)
            labels = construct_labels(s.target, model.geometry, self.cfg.loss.label_radius, bev_z_channel=bev_z)
            loss, parts = total_loss(heads, labels, self.cfg.loss)
            (loss * (1.0 / batch)).backward()
            for k, v in parts.items():
                agg[k] = agg.get(k, 0.0) + v / batch
        self.opt.step()
        self.step_count += 1
        self.history.append(agg)
        log.info(format_breakdown(self.step_count, agg))
        return agg

    def fit(self, steps: int, batch: int = 1, callback: Callable[[int, dict], None] | None = None) -> list[dict[str, float]]:
        for _ in range(steps):
            parts = self.step(batch)
            if callback:
                callback(self.step_count, parts)
        return self.history
