"""Exhaustive pack/unpack sweep over every short code sequence.

Sequences of length ``L`` at width ``b`` are enumerated as the base-``2**b``
digits of an integer ``v`` (digit ``k`` = code ``k``). With LSB-first packing
the packed bytes of that sequence are exactly the little-endian bytes of ``v``
truncated to ``ceil(L*b/8)`` bytes -- an oracle that shares nothing with the
packer. Rows are processed in chunks: the low digits enumerate a fixed block
and the remaining high digits are swept one chunk at a time.
"""
from __future__ import annotations

import numpy as np

from tahquant.bitpack import pack_rows, segment_bytes, unpack_rows

LOW_BITS = 24


def _digits(v, length: int, bits: int, out=None) -> np.ndarray:
    v = np.asarray(v, dtype=np.uint32).reshape(-1)
    if out is None:
        out = np.empty((v.size, length), dtype=np.uint8)
    mask = np.uint32((1 << bits) - 1)
    for k in range(length):
        out[:, k] = (v >> np.uint32(k * bits)) & mask
    return out


def _le_bytes(v: np.ndarray, nbytes: int) -> np.ndarray:
    return np.asarray(v, dtype="<u8").reshape(-1).view(np.uint8).reshape(-1, 8)[:, :nbytes]


def sweep(length: int, bits: int, low_bits: int = LOW_BITS) -> int:
    """Check every ``bits``-wide sequence of ``length`` codes; returns how many."""
    nbytes = segment_bytes(length, bits)
    low_digits = min(length, low_bits // bits)
    high_digits = length - low_digits
    shift = low_digits * bits
    low = np.arange(1 << shift, dtype=np.uint64)
    codes = np.zeros((low.size, length), dtype=np.uint8)
    _digits(low, low_digits, bits, out=codes[:, :low_digits])
    expected = np.ascontiguousarray(_le_bytes(low, nbytes))
    for hi in range(1 << (high_digits * bits)):
        if high_digits:
            codes[:, low_digits:] = _digits(hi, high_digits, bits)[0]
        if shift % 8 == 0:
            # low digits fill whole bytes, so the high digits own the tail bytes
            expected[:, shift // 8:] = _le_bytes(np.uint64(hi) << np.uint64(shift), nbytes)[0, shift // 8:]
        else:
            expected = _le_bytes(low | (np.uint64(hi) << np.uint64(shift)), nbytes)
        packed = pack_rows(codes, bits)
        if not np.array_equal(packed, expected):
            raise AssertionError(f"pack mismatch: bits={bits} length={length} high={hi}")
        if not np.array_equal(unpack_rows(packed, length, bits), codes):
            raise AssertionError(f"unpack mismatch: bits={bits} length={length} high={hi}")
    return low.size << (high_digits * bits)
