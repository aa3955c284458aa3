"""Adam with a constant-then-linear-decay learning rate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class TrainConfig:
    lr0: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    total_iters: int = 1000
    decay_start: Optional[int] = None  # defaults to total_iters // 2
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.decay_start is None:
            self.decay_start = self.total_iters // 2
        if not 0 < self.decay_start <= self.total_iters:
            raise ValueError(
                f"need 0 < decay_start <= total_iters, got {self.decay_start}, {self.total_iters}"
            )
        if self.lr0 <= 0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")
        if self.batch_size != 1:
            raise ValueError("only batch_size = 1 is supported")


def learning_rate(cfg: TrainConfig, it: int) -> float:
    """Constant ``lr0`` up to ``decay_start``, then linear to zero at ``total_iters``."""
    if it <= cfg.decay_start:
        return cfg.lr0
    return cfg.lr0 * (cfg.total_iters - it) / (cfg.total_iters - cfg.decay_start)


def adam_step(model, cfg: TrainConfig, it: int) -> float:
    """One bias-corrected Adam update at 1-based iteration ``it``; zeroes grads.

    Returns the learning rate used.
    """
    if not 1 <= it <= cfg.total_iters:
        raise ValueError(f"iteration {it} outside [1, {cfg.total_iters}]")
    lr = learning_rate(cfg, it)
    g = model.grads
    model.adam_m *= cfg.beta1
    model.adam_m += (1.0 - cfg.beta1) * g
    model.adam_v *= cfg.beta2
    model.adam_v += (1.0 - cfg.beta2) * g * g
    m_hat = model.adam_m / (1.0 - cfg.beta1**it)
    v_hat = model.adam_v / (1.0 - cfg.beta2**it)
    model.params -= lr * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    model.zero_grad()
    return lr
