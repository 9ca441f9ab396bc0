"""Synthetic teacher-regression task."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import List

import numpy as np

from .model import ModelConfig, PipelineModel, full_loss_and_grad


@dataclass(frozen=True)
class TrainBatch:
    x: np.ndarray        # (B, S, d_in)
    targets: np.ndarray  # (B, S, d_out)
    index: int = -1


@dataclass(frozen=True)
class SyntheticTask:
    """A fixed, finite training set labelled by a random teacher network.

    The teacher has the student's architecture (including any outlier
    channel scaling), so the task is realisable up to label noise. The data
    distribution is uniform over ``n_batches`` stored batches, which makes the
    full-batch gradient an exact average.
    """

    config: ModelConfig
    seed: int = 0
    n_batches: int = 32
    noise: float = 0.05
    teacher_scale: float = 1.5

    @cached_property
    def teacher(self) -> PipelineModel:
        t = PipelineModel.init(self.config, seed=self.seed, scale=self.teacher_scale)
        rng = np.random.default_rng([self.seed, 0])
        t.params["b1"] = rng.standard_normal(self.config.channels) * 0.5
        # outlier channels get proportionally smaller head weights so targets stay O(1)
        t.params["W2"] = t.params["W2"] / self.config.channel_scale()[:, None]
        return t

    @cached_property
    def batches(self) -> List[TrainBatch]:
        cfg = self.config
        out = []
        for i in range(self.n_batches):
            rng = np.random.default_rng([self.seed, 1, i])
            x = rng.standard_normal((cfg.batch, cfg.seq, cfg.d_in))
            clean = x @ self.teacher.params["W1"] + self.teacher.params["b1"]
            clean = np.tanh(clean) if cfg.nonlinearity == "tanh" else clean
            y = (clean * cfg.channel_scale()) @ self.teacher.params["W2"]
            y = y + self.noise * rng.standard_normal(y.shape)
            out.append(TrainBatch(x, y, i))
        return out

    def sample(self, step: int) -> TrainBatch:
        """Batch used at ``step``; depends only on ``(seed, step)``."""
        i = int(np.random.default_rng([self.seed, 3, step]).integers(self.n_batches))
        return self.batches[i]

    def full_loss(self, model: PipelineModel) -> float:
        return float(np.mean([full_loss_and_grad(model, b.x, b.targets)[0] for b in self.batches]))
