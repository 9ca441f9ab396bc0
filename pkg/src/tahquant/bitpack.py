"""Sub-byte code packing.

Codes are laid out LSB-first: code ``k`` of a segment occupies stream bits
``[k*b, (k+1)*b)``, and stream bit ``i`` is bit ``i % 8`` of byte ``i // 8``.
Every tile gets its own byte-aligned segment of ``ceil(G*b/8)`` bytes, with
zero padding.
"""
from __future__ import annotations

import numpy as np

from .errors import CodeRangeError, CorruptPayloadError, TruncationError


def segment_bytes(n: int, bits: int) -> int:
    return (n * bits + 7) // 8


def _check_bits(bits: int):
    if not 1 <= bits <= 8:
        raise CodeRangeError(f"bit width must be in [1, 8], got {bits}")


def pack_rows(codes: np.ndarray, bits: int) -> np.ndarray:
    """Pack each row of an ``(n, G)`` uint8 code matrix into its own segment.

    Returns an ``(n, ceil(G*bits/8))`` uint8 array. Codes are assumed to be
    in range already.
    """
    n, g = codes.shape
    if 8 % bits == 0:
        return _pack_bytewise(codes, bits)
    # eight b-bit codes fill exactly b bytes: pack them as one little-endian u64
    groups = (g + 7) // 8
    if g % 8:
        codes = np.pad(codes, ((0, 0), (0, groups * 8 - g)))
    c = codes.reshape(n, groups, 8)
    word = np.zeros((n, groups), dtype=np.uint64)
    for k in range(8):
        word |= c[:, :, k].astype(np.uint64) << np.uint64(k * bits)
    out = word.astype("<u8").view(np.uint8).reshape(n, groups, 8)[:, :, :bits]
    return out.reshape(n, groups * bits)[:, : segment_bytes(g, bits)]


_WORD = {1: "<u8", 2: "<u4", 4: "<u2"}


def _pack_bytewise(codes: np.ndarray, bits: int) -> np.ndarray:
    # widths dividing 8 never straddle a byte: view each group of 8/bits codes
    # as one little-endian word and slide code k down by k*(8-bits) bits; with
    # in-range codes nothing else lands in the low byte, so no masking is needed
    n, g = codes.shape
    if bits == 8:
        return np.ascontiguousarray(codes, dtype=np.uint8)
    per = 8 // bits
    if g % per:
        codes = np.pad(codes, ((0, 0), (0, per - g % per)))
    w = np.ascontiguousarray(codes, dtype=np.uint8).view(_WORD[bits])
    out = w >> (8 - bits)
    out |= w
    tmp = np.empty_like(w)
    for k in range(2, per):
        np.right_shift(w, k * (8 - bits), out=tmp)
        out |= tmp
    return out.astype(np.uint8)


def _unpack_bytewise(rows: np.ndarray, g: int, bits: int) -> np.ndarray:
    if bits == 8:
        return np.array(rows, dtype=np.uint8)
    per = 8 // bits
    r = np.ascontiguousarray(rows).astype(_WORD[bits])
    # mirror of the packer: slide code k up by k*(8-bits), then keep only the
    # low ``bits`` of every byte
    w = r << (8 - bits)
    w |= r
    tmp = np.empty_like(r)
    for k in range(2, per):
        np.left_shift(r, k * (8 - bits), out=tmp)
        w |= tmp
    w &= int.from_bytes(bytes([(1 << bits) - 1]) * per, "little")
    return w.view(np.uint8).reshape(rows.shape[0], rows.shape[1] * per)


def unpack_rows(rows: np.ndarray, g: int, bits: int) -> np.ndarray:
    """Inverse of :func:`pack_rows`; rejects non-zero padding bits."""
    n = rows.shape[0]
    if 8 % bits == 0:
        codes = _unpack_bytewise(rows, g, bits)
        if codes[:, g:].any():
            raise CorruptPayloadError("non-zero padding bits in payload segment")
        return codes[:, :g]
    groups = (g + 7) // 8
    full = np.zeros((n, groups * 8), dtype=np.uint8)
    grouped = full.reshape(n, groups, 8)
    padded = np.zeros((n, groups * bits), dtype=np.uint8)
    padded[:, : rows.shape[1]] = rows
    grouped[:, :, :bits] = padded.reshape(n, groups, bits)
    word = full.view("<u8").reshape(n, groups)
    mask = np.uint64((1 << bits) - 1)
    codes = np.empty((n, groups, 8), dtype=np.uint8)
    for k in range(8):
        codes[:, :, k] = (word >> np.uint64(k * bits)) & mask
    codes = codes.reshape(n, groups * 8)
    if codes[:, g:].any() or _tail_bits(rows, g, bits):
        raise CorruptPayloadError("non-zero padding bits in payload segment")
    return codes[:, :g]


def _tail_bits(rows: np.ndarray, g: int, bits: int) -> bool:
    used = g * bits
    if used % 8 == 0:
        return False
    return bool((rows[:, used // 8] >> (used % 8)).any())


def pack_codes(codes, bits: int) -> bytes:
    """Pack a flat sequence of unsigned codes into ``ceil(n*bits/8)`` bytes."""
    _check_bits(bits)
    arr = np.asarray(codes, dtype=np.int64).reshape(-1)
    if arr.size == 0:
        return b""
    if arr.min() < 0 or arr.max() >= (1 << bits):
        raise CodeRangeError(f"code out of range for {bits}-bit packing")
    return pack_rows(arr.astype(np.uint8)[None, :], bits).tobytes()


def unpack_codes(data, n: int, bits: int) -> np.ndarray:
    """Inverse of :func:`pack_codes`; reads exactly ``ceil(n*bits/8)`` bytes."""
    _check_bits(bits)
    need = segment_bytes(n, bits)
    buf = np.frombuffer(bytes(data), dtype=np.uint8)
    if buf.size < need:
        raise TruncationError(f"need {need} bytes for {n} codes, got {buf.size}")
    if n == 0:
        return np.zeros(0, dtype=np.uint8)
    return unpack_rows(buf[None, :need], n, bits)[0]


def pack_tiles(codes: np.ndarray, tile_bits: np.ndarray) -> bytes:
    """Pack an ``(n_tiles, G)`` code matrix, one aligned segment per tile."""
    codes = np.asarray(codes)
    tile_bits = np.asarray(tile_bits, dtype=np.int64)
    n, g = codes.shape
    seg = (g * tile_bits + 7) // 8
    starts = np.concatenate(([0], np.cumsum(seg)[:-1])) if n else seg
    out = np.zeros(int(seg.sum()), dtype=np.uint8)
    for b in np.unique(tile_bits):
        b = int(b)
        _check_bits(b)
        rows = np.flatnonzero(tile_bits == b)
        block = codes[rows].astype(np.int64)
        if block.size and block.max() >= (1 << b):
            raise CodeRangeError(f"code out of range for {b}-bit packing")
        packed = pack_rows(block.astype(np.uint8), b)
        if rows.size == n:
            return packed.tobytes()
        out[starts[rows, None] + np.arange(packed.shape[1])] = packed
    return out.tobytes()


def unpack_tiles(payload, g: int, tile_bits: np.ndarray) -> np.ndarray:
    """Inverse of :func:`pack_tiles`; the payload length must match exactly."""
    tile_bits = np.asarray(tile_bits, dtype=np.int64)
    buf = np.frombuffer(bytes(payload), dtype=np.uint8)
    seg = (g * tile_bits + 7) // 8
    total = int(seg.sum())
    if buf.size < total:
        raise TruncationError(f"payload has {buf.size} bytes, expected {total}")
    if buf.size > total:
        raise CorruptPayloadError(f"payload has {buf.size} bytes, expected {total}")
    n = tile_bits.size
    starts = np.concatenate(([0], np.cumsum(seg)[:-1])) if n else seg
    codes = np.zeros((n, g), dtype=np.uint8)
    for b in np.unique(tile_bits):
        b = int(b)
        _check_bits(b)
        rows = np.flatnonzero(tile_bits == b)
        nb = segment_bytes(g, b)
        if rows.size == n:
            return unpack_rows(buf.reshape(n, nb), g, b)
        codes[rows] = unpack_rows(buf[starts[rows, None] + np.arange(nb)], g, b)
    return codes
