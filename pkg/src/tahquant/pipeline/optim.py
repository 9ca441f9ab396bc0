"""Momentum SGD: ``m <- (1 - beta1) m + beta1 g``, ``x <- x - lr m``."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ..errors import ConfigError, TrainingDivergenceError

Params = Dict[str, np.ndarray]


@dataclass
class MomentumState:
    beta1: float
    lr: float
    m: Params = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: Params, beta1: float, lr: float) -> "MomentumState":
        return cls(beta1, lr, {k: np.zeros_like(v) for k, v in params.items()})

    def subset(self, names) -> "MomentumState":
        return MomentumState(self.beta1, self.lr, {k: self.m[k] for k in names})


def momentum_update(state: MomentumState, grads: Params, params: Params):
    """Apply one step; returns new ``(state, params)`` and leaves inputs untouched.

    Missing momentum buffers start at zero.
    """
    for k, g in grads.items():
        if not np.isfinite(g).all():
            raise TrainingDivergenceError(f"non-finite gradient for {k}")
    b = state.beta1
    new_m, new_p = {}, dict(params)
    for k, g in grads.items():
        m_prev = state.m.get(k)
        m_prev = np.zeros_like(g) if m_prev is None else m_prev
        new_m[k] = (1.0 - b) * m_prev + b * g
        new_p[k] = params[k] - state.lr * new_m[k]
    for k, v in state.m.items():
        new_m.setdefault(k, v)
    return MomentumState(b, state.lr, new_m), new_p


def theory_bounds(delta: float, lsmooth: float, beta1: Optional[float] = None):
    """Admissible ``beta1`` upper bound and ``lr`` upper bound for the convergence guarantee."""
    beta_max = delta / (24.0 - 12.0 * delta)
    if beta1 is None:
        return beta_max, None
    return beta_max, min(1.0 / (2.0 * lsmooth), beta1 / lsmooth * math.sqrt(delta / 8.0))


def check_hyperparams(beta1: float, lr: float, strict: bool = False,
                      delta: Optional[float] = None, lsmooth: Optional[float] = None):
    if not 0.0 < beta1 <= 1.0:
        raise ConfigError(f"beta1 must lie in (0, 1], got {beta1}")
    if not (lr > 0 and math.isfinite(lr)):
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if not strict:
        return
    if delta is None or lsmooth is None:
        raise ConfigError("strict theory mode needs both delta and the smoothness constant L")
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    if not lsmooth > 0:
        raise ConfigError(f"L must be positive, got {lsmooth}")
    beta_max, lr_max = theory_bounds(delta, lsmooth, beta1)
    if not beta1 < beta_max:
        raise ConfigError(f"beta1={beta1} outside (0, {beta_max:.6g}) for delta={delta}")
    if lr > lr_max:
        raise ConfigError(f"lr={lr} exceeds {lr_max:.6g} for delta={delta}, L={lsmooth}")
