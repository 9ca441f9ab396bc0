"""Two-stage regression network split at a ``(B, S, C)`` activation.

Stage A: ``a = s * tanh(X @ W1 + b1)`` where ``s`` is a fixed, non-trainable
per-channel scale (all ones unless outlier channels are injected).
Stage B: ``y = a @ W2`` scored by mean squared error against the targets.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from ..errors import InvalidInputError

Params = Dict[str, np.ndarray]

STAGE_A = ("W1", "b1")
STAGE_B = ("W2",)
PARAM_ORDER = STAGE_A + STAGE_B


@dataclass(frozen=True)
class ModelConfig:
    d_in: int = 8
    channels: int = 64
    d_out: int = 4
    batch: int = 8
    seq: int = 16
    nonlinearity: str = "tanh"
    outlier_channels: Tuple[int, ...] = ()
    outlier_scale: float = 20.0

    def __post_init__(self):
        if self.nonlinearity not in ("tanh", "linear"):
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        if any(not 0 <= ch < self.channels for ch in self.outlier_channels):
            raise ValueError("outlier channel index out of range")

    @property
    def n_params(self) -> int:
        return self.d_in * self.channels + self.channels + self.channels * self.d_out

    def channel_scale(self) -> np.ndarray:
        s = np.ones(self.channels)
        s[list(self.outlier_channels)] = self.outlier_scale
        return s


@dataclass
class PipelineModel:
    """Parameters of both stages plus the fixed architecture.

    ``params`` maps ``W1 (d_in, C)``, ``b1 (C,)`` to stage A and ``W2 (C, d_out)``
    to stage B. ``n_stages`` is the number of pipeline machines.
    """

    config: ModelConfig
    params: Params
    seed: int = 0
    n_stages: int = field(default=2, init=False)

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0, scale: float = 1.0) -> "PipelineModel":
        rng = np.random.default_rng([seed, 2])
        params = {
            "W1": rng.standard_normal((config.d_in, config.channels)) * (scale / np.sqrt(config.d_in)),
            "b1": np.zeros(config.channels),
            "W2": rng.standard_normal((config.channels, config.d_out)) * (scale / np.sqrt(config.channels)),
        }
        return cls(config, params, seed)

    def copy(self) -> "PipelineModel":
        return PipelineModel(self.config, {k: v.copy() for k, v in self.params.items()}, self.seed)

    def stage_params(self, stage: str) -> Params:
        names = STAGE_A if stage == "a" else STAGE_B
        return {k: self.params[k] for k in names}


def flatten(grads: Params) -> np.ndarray:
    return np.concatenate([grads[k].reshape(-1) for k in PARAM_ORDER if k in grads])


def unflatten(vec: np.ndarray, like: Params) -> Params:
    out, i = {}, 0
    for k in PARAM_ORDER:
        if k in like:
            n = like[k].size
            out[k] = vec[i:i + n].reshape(like[k].shape)
            i += n
    return out


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    return np.tanh(z) if kind == "tanh" else z


def _act_grad(h: np.ndarray, kind: str) -> np.ndarray:
    return 1.0 - h * h if kind == "tanh" else np.ones_like(h)


def forward_stage_a(params: Params, x: np.ndarray, config: ModelConfig):
    """Return the cut activation ``(B, S, C)`` and the cache for backprop."""
    if x.ndim != 3 or x.shape[-1] != config.d_in:
        raise InvalidInputError(f"stage A input must be (B, S, {config.d_in}), got {x.shape}")
    z = x @ params["W1"] + params["b1"]
    h = _act(z, config.nonlinearity)
    a = h * config.channel_scale()
    return a, (x, h)


def backward_stage_a(params: Params, cache, grad_a: np.ndarray, config: ModelConfig) -> Params:
    x, h = cache
    if grad_a.shape != h.shape:
        raise InvalidInputError(f"activation gradient shape {grad_a.shape} != {h.shape}")
    dh = grad_a * config.channel_scale()
    dz = dh * _act_grad(h, config.nonlinearity)
    return {
        "W1": x.reshape(-1, x.shape[-1]).T @ dz.reshape(-1, dz.shape[-1]),
        "b1": dz.sum(axis=(0, 1)),
    }


def stage_b_loss_and_grad(params: Params, a_hat: np.ndarray, targets: np.ndarray):
    """Mean squared error of ``a_hat @ W2`` and its gradients.

    Returns ``(loss, grad wrt a_hat, {"W2": grad})``.
    """
    w2 = params["W2"]
    if a_hat.ndim != 3 or a_hat.shape[-1] != w2.shape[0]:
        raise InvalidInputError(f"activation shape {a_hat.shape} does not fit W2 {w2.shape}")
    if targets.shape != a_hat.shape[:2] + (w2.shape[1],):
        raise InvalidInputError(f"target shape {targets.shape} does not fit predictions")
    y = a_hat @ w2
    r = y - targets
    loss = float(np.mean(r * r))
    dy = r * (2.0 / r.size)
    grad_w2 = a_hat.reshape(-1, a_hat.shape[-1]).T @ dy.reshape(-1, dy.shape[-1])
    grad_a = dy @ w2.T
    return loss, grad_a, {"W2": grad_w2}


def full_loss_and_grad(model: PipelineModel, x: np.ndarray, targets: np.ndarray):
    """Exact loss and gradients of the whole network in one pass (no cut)."""
    p, cfg = model.params, model.config
    s = cfg.channel_scale()
    z = x @ p["W1"] + p["b1"]
    h = _act(z, cfg.nonlinearity)
    a = h * s
    y = a @ p["W2"]
    r = y - targets
    loss = float(np.mean(r * r))
    dy = r * (2.0 / r.size)
    grad_w2 = a.reshape(-1, a.shape[-1]).T @ dy.reshape(-1, dy.shape[-1])
    dz = (dy @ p["W2"].T) * s * _act_grad(h, cfg.nonlinearity)
    return loss, {
        "W1": x.reshape(-1, x.shape[-1]).T @ dz.reshape(-1, dz.shape[-1]),
        "b1": dz.sum(axis=(0, 1)),
        "W2": grad_w2,
    }


def full_loss(model: PipelineModel, x: np.ndarray, targets: np.ndarray) -> float:
    return full_loss_and_grad(model, x, targets)[0]
