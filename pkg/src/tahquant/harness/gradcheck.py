from __future__ import annotations

import numpy as np

from ..errors import TrainingDivergenceError


def finite_diff_gradient(f, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x`` (any shape), one coordinate at a time."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise TrainingDivergenceError(f"non-finite loss while probing coordinate {i}")
        g[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(approx, exact) -> float:
    """``||approx - exact|| / max(||exact||, tiny)``."""
    approx, exact = np.asarray(approx, float), np.asarray(exact, float)
    return float(np.linalg.norm(approx - exact) / max(np.linalg.norm(exact), 1e-300))
