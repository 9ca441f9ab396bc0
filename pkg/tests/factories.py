"""Random but valid CompressedActivation structures, built field by field."""
from __future__ import annotations

import numpy as np

from tahquant.bitpack import pack_tiles
from tahquant.compressed import CompressedActivation, Header


def random_f32(rng, n):
    """Finite float32 values drawn from raw bit patterns (covers subnormals, -0.0)."""
    raw = rng.integers(0, 1 << 32, size=n, dtype=np.uint64).astype(np.uint32)
    vals = raw.view(np.float32).copy()
    bad = ~np.isfinite(vals)
    vals[bad] = np.float32(1.5)
    return vals


def random_compressed(rng: np.random.Generator) -> CompressedActivation:
    g = int(rng.choice([2, 4, 8, 16, 32, 64]))
    b, s = (int(v) for v in rng.integers(1, 5, size=2))
    c = g * int(rng.integers(1, 4))
    b_lo = int(rng.integers(2, 9))
    b_hi = int(rng.integers(b_lo, 9))
    adaptive, hadamard = bool(rng.integers(2)), bool(rng.integers(2))
    header = Header((b, s, c), g, b_hi, b_lo, adaptive, hadamard)
    bitmap = np.where(rng.random((b, s)) < 0.5, b_hi, b_lo).astype(np.uint8)
    n = header.n_tiles
    transformed = (rng.random(n) < 0.4) & hadamard
    pivots = np.where(transformed, rng.integers(0, g, size=n), 0).astype(np.uint16)
    offsets = random_f32(rng, n)
    scales = np.abs(random_f32(rng, n))
    tile_bits = np.repeat(bitmap.reshape(-1), c // g).astype(np.int64)
    codes = (rng.integers(0, 256, size=(n, g)) % (1 << tile_bits[:, None])).astype(np.uint8)
    return CompressedActivation(header, bitmap, transformed, pivots, offsets, scales,
                                pack_tiles(codes, tile_bits))
