"""Two-stage pipeline-parallel training with compressed activation traffic.

Per step: stage A computes the cut activation and ships it through the forward
compressor; stage B decodes it, computes loss and the activation gradient,
ships that back through the backward compressor; both stages then take a
momentum-SGD step on their own parameters. Every tensor crosses a byte
channel, even in the single-threaded mode.
"""
from __future__ import annotations

import csv
import logging
import os
import threading
import zlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config import QuantConfig
from ..errors import TahqError
from .channel import NaiveCompressor, Passthrough, TahCompressor, blob_mean_bits, make_channel
from .checkpoint import save_checkpoint
from .data import SyntheticTask, TrainBatch
from .model import (
    STAGE_A, STAGE_B, ModelConfig, PipelineModel, backward_stage_a, forward_stage_a,
    full_loss_and_grad, stage_b_loss_and_grad,
)
from .optim import MomentumState, check_hyperparams, momentum_update

log = logging.getLogger(__name__)

CSV_COLUMNS = ("step", "loss", "bits_fw_mean", "bytes_fw", "bytes_bw")


def default_workers() -> int:
    """Worker count from ``TAHQ_THREADS`` (1 = sequential, 2 = one thread per stage)."""
    raw = os.environ.get("TAHQ_THREADS", "1").strip() or "1"
    return 2 if int(raw) >= 2 else 1


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 500
    lr: float = 0.1
    beta1: float = 0.2
    quant: QuantConfig = field(default_factory=QuantConfig)
    bw_bits: int = 6
    seed: int = 0
    baseline: bool = False
    model: ModelConfig = field(default_factory=ModelConfig)
    n_batches: int = 32
    noise: float = 0.05
    workers: Optional[int] = None
    channel: str = "queue"
    eval_steps: Tuple[int, ...] = ()
    strict_theory: bool = False
    delta: Optional[float] = None
    lsmooth: Optional[float] = None

    def validate(self):
        check_hyperparams(self.beta1, self.lr, self.strict_theory, self.delta, self.lsmooth)
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        self.quant.n_tiles(self.model.channels)

    def task(self) -> SyntheticTask:
        return SyntheticTask(self.model, seed=self.seed, n_batches=self.n_batches, noise=self.noise)

    def compressors(self):
        if self.baseline:
            return Passthrough(), Passthrough()
        return TahCompressor(self.quant), NaiveCompressor(self.bw_bits, self.quant.tile_size)


@dataclass
class StepRecord:
    step: int
    loss: float
    bits_fw_mean: float
    bytes_fw: int
    bytes_bw: int

    def row(self):
        return (self.step, repr(self.loss), f"{self.bits_fw_mean:.6g}", self.bytes_fw, self.bytes_bw)


@dataclass
class TrainResult:
    records: List[StepRecord]
    model: PipelineModel
    state: MomentumState
    eval_losses: Dict[int, float] = field(default_factory=dict)

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])


class StageA:
    """Owns ``W1, b1`` and their momentum; talks to stage B only via bytes."""

    def __init__(self, config: ModelConfig, params, state: MomentumState, fw, bw):
        self.config, self.params, self.state = config, params, state
        self.fw, self.bw = fw, bw
        self._cache = None
        self.sent_crc: List[int] = []
        self.recv_crc: List[int] = []

    def forward(self, batch: TrainBatch) -> bytes:
        a, self._cache = forward_stage_a(self.params, batch.x, self.config)
        blob = self.fw.encode(a)
        self.sent_crc.append(zlib.crc32(blob))
        return blob

    def backward(self, blob: bytes) -> None:
        self.recv_crc.append(zlib.crc32(blob))
        grad_a = self.bw.decode(blob)
        grads = backward_stage_a(self.params, self._cache, grad_a, self.config)
        self._cache = None
        self.state, self.params = momentum_update(self.state, grads, self.params)


class StageB:
    """Owns ``W2``; computes the loss on the received activation."""

    def __init__(self, params, state: MomentumState, fw, bw):
        self.params, self.state = params, state
        self.fw, self.bw = fw, bw
        self.sent_crc: List[int] = []
        self.recv_crc: List[int] = []

    def step(self, blob: bytes, batch: TrainBatch) -> Tuple[bytes, float]:
        self.recv_crc.append(zlib.crc32(blob))
        a_hat = self.fw.decode(blob)
        loss, grad_a, grads = stage_b_loss_and_grad(self.params, a_hat, batch.targets)
        out = self.bw.encode(grad_a)
        self.sent_crc.append(zlib.crc32(out))
        self.state, self.params = momentum_update(self.state, grads, self.params)
        return out, loss


def _split(model: PipelineModel, state: MomentumState, fw, bw):
    a = StageA(model.config, model.stage_params("a"), state.subset(STAGE_A), fw, bw)
    b = StageB(model.stage_params("b"), state.subset(STAGE_B), fw, bw)
    return a, b


def _join(model: PipelineModel, a: StageA, b: StageB, beta1: float, lr: float):
    params = {**a.params, **b.params}
    new_model = PipelineModel(model.config, params, model.seed)
    return new_model, MomentumState(beta1, lr, {**a.state.m, **b.state.m})


def _check_wire(a: StageA, b: StageB):
    for k, (s, r) in enumerate(zip(a.sent_crc, b.recv_crc)):
        if s != r:
            raise TahqError(f"forward blob corrupted on the wire at exchange {k}")
    for k, (s, r) in enumerate(zip(b.sent_crc, a.recv_crc)):
        if s != r:
            raise TahqError(f"backward blob corrupted on the wire at exchange {k}")


def _exchange(stage_a: StageA, stage_b: StageB, batch: TrainBatch, fw_ch, bw_ch):
    fw_ch.send(stage_a.forward(batch))
    fw_blob = fw_ch.recv()
    bw_out, loss = stage_b.step(fw_blob, batch)
    bw_ch.send(bw_out)
    bw_blob = bw_ch.recv()
    stage_a.backward(bw_blob)
    return loss, fw_blob, bw_blob


def train_step(model: PipelineModel, state: MomentumState, batch: TrainBatch,
               cfg: TrainConfig, fw=None, bw=None, step: int = 1):
    """One sequential pipeline step; returns ``(model', state', loss, diagnostics)``."""
    dfw, dbw = cfg.compressors()
    fw, bw = fw or dfw, bw or dbw
    stage_a, stage_b = _split(model, state, fw, bw)
    fw_ch, bw_ch = make_channel(cfg.channel), make_channel(cfg.channel)
    try:
        loss, fw_blob, bw_blob = _exchange(stage_a, stage_b, batch, fw_ch, bw_ch)
    finally:
        fw_ch.close()
        bw_ch.close()
    _check_wire(stage_a, stage_b)
    new_model, new_state = _join(model, stage_a, stage_b, state.beta1, state.lr)
    rec = StepRecord(step, loss, blob_mean_bits(fw_blob), len(fw_blob), len(bw_blob))
    return new_model, new_state, loss, rec


def _run_sequential(stage_a, stage_b, task, steps, fw_ch, bw_ch, on_step):
    records = []
    for t in range(1, steps + 1):
        batch = task.sample(t)
        loss, fw_blob, bw_blob = _exchange(stage_a, stage_b, batch, fw_ch, bw_ch)
        records.append(StepRecord(t, loss, blob_mean_bits(fw_blob), len(fw_blob), len(bw_blob)))
        on_step(t)
    return records


def _run_threaded(stage_a, stage_b, task, steps, fw_ch, bw_ch, on_step):
    """Each stage in its own thread, lockstep over the two ordered channels."""
    errors: List[BaseException] = []
    records: List[StepRecord] = []
    a_done = [threading.Event() for _ in range(steps + 1)]
    b_done = [threading.Event() for _ in range(steps + 1)]

    def worker_a():
        try:
            for t in range(1, steps + 1):
                fw_ch.send(stage_a.forward(task.sample(t)))
                stage_a.backward(bw_ch.recv(timeout=60))
                a_done[t].set()
                b_done[t].wait()
                on_step(t)
        except BaseException as exc:  # surfaced to the caller below
            errors.append(exc)
            fw_ch.send(b"")

    def worker_b():
        try:
            for t in range(1, steps + 1):
                fw_blob = fw_ch.recv(timeout=60)
                if not fw_blob:
                    return
                bw_out, loss = stage_b.step(fw_blob, task.sample(t))
                bw_ch.send(bw_out)
                records.append(StepRecord(t, loss, blob_mean_bits(fw_blob), len(fw_blob), len(bw_out)))
                b_done[t].set()
                a_done[t].wait()
        except BaseException as exc:
            errors.append(exc)
            bw_ch.send(b"")

    threads = [threading.Thread(target=worker_a, name="stage-a"),
               threading.Thread(target=worker_b, name="stage-b")]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if errors:
        raise errors[0]
    return records


def run_training(cfg: TrainConfig, csv_path=None, checkpoint_path=None,
                 fw=None, bw=None, model: Optional[PipelineModel] = None) -> TrainResult:
    """Train for ``cfg.steps`` steps and return the loss curve and final weights.

    ``fw``/``bw`` override the forward/backward compressors (default: TAH-Quant
    forward, naive backward; passthrough both ways when ``cfg.baseline``).
    Exact full-dataset losses are recorded after every step in ``cfg.eval_steps``.
    """
    cfg.validate()
    task = cfg.task()
    model = model.copy() if model is not None else PipelineModel.init(cfg.model, seed=cfg.seed)
    state = MomentumState.zeros_like(model.params, cfg.beta1, cfg.lr)
    dfw, dbw = cfg.compressors()
    fw, bw = fw or dfw, bw or dbw
    stage_a, stage_b = _split(model, state, fw, bw)

    eval_losses: Dict[int, float] = {}
    wanted = set(cfg.eval_steps)

    def on_step(t):
        # both stages are parked at the end of step t when this runs
        if t in wanted:
            snap = PipelineModel(model.config, {**stage_a.params, **stage_b.params}, model.seed)
            eval_losses[t] = task.full_loss(snap)

    if 0 in wanted:
        eval_losses[0] = task.full_loss(model)
    workers = cfg.workers if cfg.workers is not None else default_workers()
    fw_ch, bw_ch = make_channel(cfg.channel), make_channel(cfg.channel)
    try:
        run = _run_threaded if workers >= 2 else _run_sequential
        records = run(stage_a, stage_b, task, cfg.steps, fw_ch, bw_ch, on_step)
    finally:
        fw_ch.close()
        bw_ch.close()
    _check_wire(stage_a, stage_b)
    final_model, final_state = _join(model, stage_a, stage_b, cfg.beta1, cfg.lr)

    if csv_path is not None:
        write_loss_csv(csv_path, records)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, final_model.params, final_state.m, cfg.steps)
    return TrainResult(records, final_model, final_state, eval_losses)


def write_loss_csv(path, records: Sequence[StepRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(r.row())


def train_reference(cfg: TrainConfig, model: Optional[PipelineModel] = None):
    """Single-process momentum SGD on the uncut network, no compression.

    Returns ``(losses, model, state)``; used as the oracle for the pipelined run.
    """
    cfg.validate()
    task = cfg.task()
    model = model.copy() if model is not None else PipelineModel.init(cfg.model, seed=cfg.seed)
    state = MomentumState.zeros_like(model.params, cfg.beta1, cfg.lr)
    losses = []
    for t in range(1, cfg.steps + 1):
        batch = task.sample(t)
        loss, grads = full_loss_and_grad(model, batch.x, batch.targets)
        state, params = momentum_update(state, grads, model.params)
        model = PipelineModel(model.config, params, model.seed)
        losses.append(loss)
    return np.array(losses), model, state
