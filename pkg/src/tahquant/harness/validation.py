"""Relative gradient-error measurements for the quantized pipeline.

Step-wise: ``||g_hat - g||^2 / ||g||^2`` on one batch, both gradients at the
same parameters. Full-batch: the same ratio between the average quantized
gradient over the whole training set and the exact full-batch gradient.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..errors import InvalidInputError, UndefinedRatioError
from ..pipeline.channel import NaiveCompressor, TahCompressor
from ..pipeline.data import TrainBatch
from ..pipeline.model import (
    PipelineModel, backward_stage_a, flatten, forward_stage_a, full_loss_and_grad,
    stage_b_loss_and_grad,
)
from ..pipeline.optim import MomentumState
from ..pipeline.train import TrainConfig, train_step

CSV_COLUMNS = ("step", "stepwise_ratio", "fullbatch_ratio", "grad_variance")


def default_compressors(cfg: TrainConfig):
    return TahCompressor(cfg.quant), NaiveCompressor(cfg.bw_bits, cfg.quant.tile_size)


def exact_gradient(model: PipelineModel, batch: TrainBatch) -> np.ndarray:
    return flatten(full_loss_and_grad(model, batch.x, batch.targets)[1])


def quantized_gradient(model: PipelineModel, batch: TrainBatch, fw, bw) -> np.ndarray:
    """Gradient as the pipeline sees it: activation and its gradient both go through bytes."""
    pa, pb = model.stage_params("a"), model.stage_params("b")
    a, cache = forward_stage_a(pa, batch.x, model.config)
    a_hat = fw.decode(fw.encode(a))
    _, grad_a, grads_b = stage_b_loss_and_grad(pb, a_hat, batch.targets)
    grad_a_hat = bw.decode(bw.encode(grad_a))
    grads_a = backward_stage_a(pa, cache, grad_a_hat, model.config)
    return flatten({**grads_a, **grads_b})


def _ratio(approx: np.ndarray, exact: np.ndarray) -> float:
    denom = float(exact @ exact)
    if denom == 0.0:
        raise UndefinedRatioError("reference gradient is exactly zero")
    d = approx - exact
    return float(d @ d) / denom


def measure_step_error(model: PipelineModel, batch: TrainBatch, fw, bw) -> float:
    return _ratio(quantized_gradient(model, batch, fw, bw), exact_gradient(model, batch))


def measure_fullbatch_error(model: PipelineModel, dataset: Sequence[TrainBatch], fw, bw,
                            return_variance: bool = False):
    """Ratio for the dataset-averaged gradient; optionally also the gradient variance."""
    if len(dataset) == 0:
        raise InvalidInputError("full-batch measurement needs a non-empty dataset")
    exact = np.stack([exact_gradient(model, b) for b in dataset])
    quant = np.stack([quantized_gradient(model, b, fw, bw) for b in dataset])
    full = exact.mean(axis=0)
    ratio = _ratio(quant.mean(axis=0), full)
    if return_variance:
        var = float(np.mean(np.sum((exact - full) ** 2, axis=1)))
        return ratio, var
    return ratio


@dataclass
class ErrorReport:
    mode: str
    rows: List[Dict[str, float]] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def summary(self) -> Dict[str, float]:
        out = {}
        for key in ("stepwise_ratio", "fullbatch_ratio"):
            col = self.column(key) if self.rows else np.array([])
            col = col[np.isfinite(col)]
            if col.size:
                out[f"{key}_max"] = float(col.max())
                out[f"{key}_median"] = float(np.median(col))
                out[f"{key}_implied_delta"] = 1.0 - float(col.max())
        if self.rows:
            var = self.column("grad_variance")
            var = var[np.isfinite(var)]
            if var.size:
                out["grad_variance_mean"] = float(var.mean())
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                w.writerow([r["step"]] + [repr(float(r[k])) for k in CSV_COLUMNS[1:]])


def run_validation(mode: str, steps: int, cfg: Optional[TrainConfig] = None,
                   fw=None, bw=None) -> ErrorReport:
    """Train with the quantized pipeline and measure errors before each update.

    ``mode`` is ``"step"`` (step-wise ratio only) or ``"fullbatch"`` (both
    ratios plus the stochastic-gradient variance).
    """
    if mode not in ("step", "fullbatch"):
        raise ValueError(f"mode must be 'step' or 'fullbatch', got {mode!r}")
    cfg = cfg or TrainConfig(steps=steps)
    cfg.validate()
    dfw, dbw = default_compressors(cfg)
    fw, bw = fw or dfw, bw or dbw
    task = cfg.task()
    model = PipelineModel.init(cfg.model, seed=cfg.seed)
    state = MomentumState.zeros_like(model.params, cfg.beta1, cfg.lr)
    report = ErrorReport(mode)
    for t in range(1, steps + 1):
        batch = task.sample(t)
        row = {"step": t, "stepwise_ratio": measure_step_error(model, batch, fw, bw),
               "fullbatch_ratio": float("nan"), "grad_variance": float("nan")}
        if mode == "fullbatch":
            row["fullbatch_ratio"], row["grad_variance"] = measure_fullbatch_error(
                model, task.batches, fw, bw, return_variance=True)
        report.rows.append(row)
        model, state, _, _ = train_step(model, state, batch, cfg, fw, bw, step=t)
    return report
