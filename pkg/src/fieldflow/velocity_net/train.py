"""Rectified-flow training loop under the field-aware loss."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from fieldflow.fasrm import FasrmConfig, build_bands, fasfl_gradient, fasfl_loss
from fieldflow.velocity_net.optim import TrainConfig, adam_step
from fieldflow.volume import as_array


class DivergedTrainingError(RuntimeError):
    def __init__(self, iteration: int):
        super().__init__(f"training diverged at iteration {iteration}")
        self.iteration = iteration


LOG_COLUMNS = ("iter", "total", "spatial_l1", "freq_low", "freq_mid", "freq_high", "lr")


@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)

    def append(self, it, loss, lr):
        self.rows.append((it, loss.total, loss.spatial_l1, *loss.freq_per_band, lr))

    @property
    def totals(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for r in self.rows:
            writer.writerow([r[0]] + [repr(float(x)) for x in r[1:]])
        return buf.getvalue()


def train(model, dataset, cfg: TrainConfig, fasrm_cfg: FasrmConfig | None = None, progress=None) -> TrainingLog:
    """Fit ``model`` to predict ``z1 - x_hf`` from ``(z_t, x_lf, task, t)``.

    Each iteration draws one pair, a time ``t ~ U[0, 1]`` and fresh noise
    ``z1`` from a generator seeded with ``cfg.seed``, so runs are bitwise
    reproducible.

    Args:
        model: VelocityModel, updated in place.
        dataset: nonempty sequence of ``(x_lf, x_hf, task)``.
        cfg: optimizer and schedule settings.
        fasrm_cfg: loss settings, defaults when omitted.
        progress: optional callable ``(it, loss)`` invoked every iteration.
    """
    if not dataset:
        raise ValueError("empty training set")
    fasrm_cfg = fasrm_cfg or FasrmConfig()
    pairs = [(as_array(lf), as_array(hf), task) for lf, hf, task in dataset]
    shape = pairs[0][0].shape
    for lf, hf, _ in pairs:
        if lf.shape != shape or hf.shape != shape:
            raise ValueError(f"all volumes must share shape {shape}")
    bands = build_bands(shape, fasrm_cfg.cutoffs)
    rng = np.random.default_rng(cfg.seed)
    log = TrainingLog()
    model.zero_grad()
    for it in range(1, cfg.total_iters + 1):
        x_lf, x_hf, task = pairs[int(rng.integers(len(pairs)))]
        t = float(rng.uniform())
        z1 = rng.standard_normal(shape)
        z_t = (1.0 - t) * x_hf + t * z1
        v_target = z1 - x_hf
        v_pred = model.forward(z_t, x_lf, task, t, cache=True)
        loss = fasfl_loss(v_pred, v_target, task, fasrm_cfg, bands)
        if not np.isfinite(loss.total):
            raise DivergedTrainingError(it)
        model.backward(fasfl_gradient(v_pred, v_target, task, fasrm_cfg, bands))
        lr = adam_step(model, cfg, it)
        log.append(it, loss, lr)
        if progress is not None:
            progress(it, loss)
    model._cache = None
    return log
