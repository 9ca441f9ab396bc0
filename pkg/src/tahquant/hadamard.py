"""Pivot-swap + orthonormal Walsh-Hadamard transform on tiles.

All functions act on the last axis, so a single tile of shape ``(G,)`` and a
stack of tiles of shape ``(n, G)`` go through the same code path. Floating
inputs keep their dtype; anything else is promoted to float64.
"""
from __future__ import annotations

import numpy as np

from .config import is_power_of_two
from .errors import UnsupportedTileSizeError


def _as_float(x) -> np.ndarray:
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    return x


def _check_size(g: int):
    if not is_power_of_two(g):
        raise UnsupportedTileSizeError(f"Hadamard size must be a power of two, got {g}")


def fwht(x) -> np.ndarray:
    """Unnormalised fast Walsh-Hadamard transform in Sylvester (natural) order.

    Computes ``x @ H_G`` along the last axis in O(G log G), where
    ``H_2n = [[H_n, H_n], [H_n, -H_n]]``.
    """
    x = _as_float(x)
    g = x.shape[-1]
    _check_size(g)
    lead = x.shape[:-1]
    y = x.reshape(-1, g).copy()
    h = 1
    while h < g:
        y = y.reshape(-1, g // (2 * h), 2, h)
        a = y[:, :, 0, :]
        b = y[:, :, 1, :]
        y = np.stack((a + b, a - b), axis=2)
        h *= 2
    return y.reshape(*lead, g)


def _swap_first(x: np.ndarray, pivot) -> np.ndarray:
    """Swap element 0 with element ``pivot`` (scalar or one per row)."""
    out = x.copy()
    pivot = np.asarray(pivot, dtype=np.int64)
    if pivot.ndim == 0:
        p = int(pivot)
        out[..., 0], out[..., p] = x[..., p], x[..., 0]
        return out
    rows = out.reshape(-1, x.shape[-1])
    src = x.reshape(-1, x.shape[-1])
    idx = np.arange(rows.shape[0])
    pv = pivot.reshape(-1)
    rows[idx, 0] = src[idx, pv]
    rows[idx, pv] = src[idx, 0]
    return out


def _check_pivot(pivot, g: int):
    pv = np.asarray(pivot)
    if pv.size and (pv.min() < 0 or pv.max() >= g):
        raise IndexError(f"pivot out of range for tile size {g}")


def forward_hadamard(tile, pivot) -> np.ndarray:
    """Swap the pivot into slot 0, then rotate by ``H_G / sqrt(G)``."""
    x = _as_float(tile)
    g = x.shape[-1]
    _check_size(g)
    _check_pivot(pivot, g)
    return fwht(_swap_first(x, pivot)) * x.dtype.type(1.0 / np.sqrt(g))


def inverse_hadamard(tile, pivot) -> np.ndarray:
    """Left inverse of :func:`forward_hadamard`.

    Sylvester ``H_G`` is symmetric, so applying ``H_G^T / sqrt(G)`` is the
    same butterfly; the swap is undone afterwards.
    """
    x = _as_float(tile)
    g = x.shape[-1]
    _check_size(g)
    _check_pivot(pivot, g)
    return _swap_first(fwht(x) * x.dtype.type(1.0 / np.sqrt(g)), pivot)
