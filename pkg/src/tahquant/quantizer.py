"""Tile-wise adaptive Hadamard activation quantizer and the naive backward quantizer.

An activation is a rank-3 array ``(B, S, C)``. Channels of each token are cut
into ``C // G`` contiguous tiles; every tile carries its own offset/scale.
Tokens whose channel-magnitude distribution has high entropy get ``b_hi``
bits, the rest ``b_lo``. Tiles whose largest magnitude dominates the runner-up
by more than ``tau`` are pivot-swapped and Hadamard-rotated before quantizing.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Tuple

import numpy as np

from .bitpack import pack_tiles
from .compressed import CompressedActivation, Header
from .config import QuantConfig
from .errors import (
    CorruptPayloadError,
    DecodeError,
    InvalidInputError,
    InvalidTileError,
)
from .hadamard import forward_hadamard, inverse_hadamard


def check_activation(t) -> np.ndarray:
    """Validate a ``(B, S, C)`` tensor and return it as a float64 array."""
    a = np.asarray(t)
    if a.ndim != 3:
        raise InvalidInputError(f"activation must be rank 3 (B, S, C), got shape {a.shape}")
    if min(a.shape) < 1:
        raise InvalidInputError(f"empty activation shape {a.shape}")
    if not np.issubdtype(a.dtype, np.number) or np.issubdtype(a.dtype, np.complexfloating):
        raise InvalidInputError(f"activation must be real, got {a.dtype}")
    a = a.astype(np.float64)
    if not np.isfinite(a).all():
        raise InvalidInputError("activation contains NaN or Inf")
    return a


def token_entropy(t, cfg: QuantConfig) -> np.ndarray:
    """Entropy of each token's normalised channel magnitudes, shape ``(B, S)``.

    ``p_k = |a_k| / (||a||_1 + eps)`` and ``H = -sum_k p_k log(p_k + varsigma)``
    (natural log), so a one-hot token scores ~0 and a flat one ~log C.
    """
    a = np.abs(check_activation(t))
    p = a / (a.sum(axis=-1, keepdims=True) + cfg.eps)
    return -(p * np.log(p + cfg.varsigma)).sum(axis=-1)


def n_high(high_frac: float, n_tokens: int) -> int:
    """``round-half-up(high_frac * n_tokens)``, using the decimal value of high_frac."""
    return int((Fraction(repr(float(high_frac))) * n_tokens + Fraction(1, 2)) // 1)


def allocate_bits(entropy, cfg: QuantConfig) -> np.ndarray:
    """Give ``b_hi`` to the top-entropy tokens, ``b_lo`` to the rest.

    Ties go to the lower flat token index.
    """
    e = np.asarray(entropy, dtype=np.float64)
    flat = e.reshape(-1)
    order = np.argsort(-flat, kind="stable")
    bits = np.full(flat.size, cfg.b_lo, dtype=np.uint8)
    bits[order[: n_high(cfg.high_frac, flat.size)]] = cfg.b_hi
    return bits.reshape(e.shape)


def outlier_ratio(tiles, varrho: float) -> Tuple[np.ndarray, np.ndarray]:
    """Largest-over-second-largest magnitude ratio and argmax, per row."""
    mag = np.abs(np.asarray(tiles, dtype=np.float64))
    g = mag.shape[-1]
    if g < 2:
        raise InvalidTileError(f"outlier detection needs at least 2 values, got {g}")
    top2 = np.partition(mag, g - 2, axis=-1)[..., g - 2:]
    r = top2[..., 1] / (top2[..., 0] + varrho)
    return r, np.argmax(mag, axis=-1)


def detect_outlier(tile, cfg: QuantConfig) -> Tuple[bool, int]:
    """Return ``(r > tau, pivot)`` for one tile."""
    tile = np.asarray(tile, dtype=np.float64)
    if tile.ndim != 1:
        raise InvalidTileError("detect_outlier expects a single 1-D tile")
    r, pivot = outlier_ratio(tile, cfg.varrho)
    return bool(r > cfg.tau), int(pivot)


def quantize_tiles(tiles, bits) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Min/max asymmetric quantization of each row of an ``(n, G)`` matrix.

    ``bits`` is a scalar or one width per row. Offsets and scales are chosen
    as float32 values (offset rounded down, scale rounded up) so that the
    stored pair still covers ``[min, max]``; codes are computed against the
    stored values, which keeps every reconstruction within half a step.
    Returns ``(codes uint8 (n, G), offsets float32 (n,), scales float32 (n,))``.
    """
    x = np.asarray(tiles, dtype=np.float64)
    if not np.isfinite(x).all():
        raise InvalidInputError("tile contains NaN or Inf")
    n = x.shape[0]
    qmax = ((1 << np.broadcast_to(np.asarray(bits, dtype=np.int64), (n,))) - 1).astype(np.float64)
    lo = x.min(axis=1)
    hi = x.max(axis=1)
    flat = hi == lo

    off = lo.astype(np.float32)
    high = off.astype(np.float64) > lo
    off[high & ~flat] = np.nextafter(off[high & ~flat], np.float32(-np.inf))
    off64 = off.astype(np.float64)

    scale = ((hi - off64) / qmax).astype(np.float32)
    scale[flat] = 0
    for _ in range(4):
        short = ~flat & (off64 + qmax * scale.astype(np.float64) < hi)
        if not short.any():
            break
        scale[short] = np.nextafter(scale[short], np.float32(np.inf))

    s64 = scale.astype(np.float64)
    safe = np.where(flat, 1.0, s64)
    v = (x - off64[:, None]) / safe[:, None]
    # values are >= 0 here, so floor(v + 0.5) is round-half-away-from-zero
    codes = np.clip(np.floor(v + 0.5), 0, qmax[:, None])
    codes[flat] = 0
    return codes.astype(np.uint8), off, scale


def dequantize_tiles(codes, offsets, scales, bits) -> np.ndarray:
    codes = np.asarray(codes)
    n = codes.shape[0]
    limit = 1 << np.broadcast_to(np.asarray(bits, dtype=np.int64), (n,))
    if (codes.astype(np.int64) >= limit[:, None]).any():
        raise CorruptPayloadError("code exceeds its tile's bit width")
    s = np.asarray(scales, dtype=np.float32).astype(np.float64)
    o = np.asarray(offsets, dtype=np.float32).astype(np.float64)
    return codes.astype(np.float64) * s[:, None] + o[:, None]


def quantize_tile(tile, bits: int) -> Tuple[np.ndarray, float, float]:
    """Quantize one tile; returns ``(codes, offset, scale)``."""
    codes, off, scale = quantize_tiles(np.asarray(tile, dtype=np.float64)[None, :], bits)
    return codes[0], float(off[0]), float(scale[0])


def dequantize_tile(codes, offset: float, scale: float, bits: int) -> np.ndarray:
    return dequantize_tiles(np.asarray(codes)[None, :], [offset], [scale], bits)[0]


def quantize_activation(t, cfg: QuantConfig) -> CompressedActivation:
    """Compress a ``(B, S, C)`` activation.

    Order: bit allocation on the raw tensor, then per-tile outlier test and
    optional pivot-swap Hadamard rotation, then asymmetric quantization at
    the token's width.
    """
    a = check_activation(t)
    b, s, c = a.shape
    g = cfg.tile_size
    nt = cfg.n_tiles(c)

    if cfg.adaptive_alloc:
        bitmap = allocate_bits(token_entropy(a, cfg), cfg)
    else:
        bitmap = np.full((b, s), cfg.b_hi, dtype=np.uint8)
    tile_bits = np.repeat(bitmap.reshape(-1), nt)

    tiles = a.reshape(-1, g)
    transformed = np.zeros(tiles.shape[0], dtype=bool)
    pivots = np.zeros(tiles.shape[0], dtype=np.uint16)
    if cfg.hadamard:
        r, argmax = outlier_ratio(tiles, cfg.varrho)
        transformed = r > cfg.tau
        if transformed.any():
            pivots[transformed] = argmax[transformed]
            tiles = tiles.copy()
            tiles[transformed] = forward_hadamard(tiles[transformed], argmax[transformed])

    codes, offsets, scales = quantize_tiles(tiles, tile_bits)
    header = Header(
        shape=(b, s, c), tile_size=g, b_hi=cfg.b_hi, b_lo=cfg.b_lo,
        adaptive_alloc=cfg.adaptive_alloc, hadamard=cfg.hadamard,
    )
    return CompressedActivation(
        header=header, bitmap=bitmap, transformed=transformed, pivots=pivots,
        offsets=offsets, scales=scales, payload=pack_tiles(codes, tile_bits),
    )


def dequantize_activation(c: CompressedActivation, dtype=np.float32) -> np.ndarray:
    """Reconstruct the ``(B, S, C)`` tensor from its compressed form."""
    codes = c.codes()
    tile_bits = c.tile_bits
    if codes[c.scales == 0].any():
        raise CorruptPayloadError("non-zero code in a zero-scale tile")
    tiles = dequantize_tiles(codes, c.offsets, c.scales, tile_bits)
    tr = c.transformed
    if tr.any():
        tiles[tr] = inverse_hadamard(tiles[tr], c.pivots[tr].astype(np.int64))
    return tiles.reshape(c.header.shape).astype(dtype)


def naive_quantize(t, bits: int = 6, tile_size: int = 32) -> CompressedActivation:
    """Plain per-tile asymmetric quantization at one uniform bit width.

    Used on the backward path; no entropy ranking and no transform.
    """
    a = check_activation(t)
    b, s, c = a.shape
    cfg = QuantConfig(tile_size=tile_size, b_hi=bits, b_lo=bits,
                      adaptive_alloc=False, hadamard=False)
    cfg.n_tiles(c)
    n = a.size // tile_size
    codes, offsets, scales = quantize_tiles(a.reshape(n, tile_size), bits)
    return CompressedActivation(
        header=Header((b, s, c), tile_size, bits, bits, False, False),
        bitmap=np.full((b, s), bits, dtype=np.uint8),
        transformed=np.zeros(n, dtype=bool),
        pivots=np.zeros(n, dtype=np.uint16),
        offsets=offsets, scales=scales,
        payload=pack_tiles(codes, np.full(n, bits)),
    )


def naive_dequantize(c: CompressedActivation, dtype=np.float32) -> np.ndarray:
    if c.transformed.any():
        raise DecodeError("naive payload must not contain transformed tiles")
    return dequantize_activation(c, dtype=dtype)
