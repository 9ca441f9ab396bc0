"""Versioned ``.tahq`` blob format for :class:`CompressedActivation`.

Layout, all little-endian::

    header   "TAHQ" | version u8 | B u32 | S u32 | C u32 | G u16 | b_hi u8 | b_lo u8 | flags u8
    bitmap   1 bit per token (1 = b_hi), LSB-first, zero-padded to a byte
    metas    per tile in (b, s, t) order: flag u8 | [pivot u16 if flag] | offset f32 | scale f32
    payload  per tile in the same order: ceil(G * bits / 8) bytes of packed codes

flags: bit 0 = adaptive allocation, bit 1 = Hadamard.
"""
from __future__ import annotations

import struct
from typing import Dict

import numpy as np

from .bitpack import pack_codes, unpack_codes, unpack_tiles  # noqa: F401  (re-exported)
from .compressed import CompressedActivation, Header
from .config import is_power_of_two
from .errors import DecodeError, FormatError, TruncationError, VersionError

MAGIC = b"TAHQ"
VERSION = 1
_HEADER = struct.Struct("<4sBIIIHBBB")
HEADER_BYTES = _HEADER.size  # 22
META_BYTES = 9
PIVOT_BYTES = 2
FLAG_ADAPTIVE = 0x01
FLAG_HADAMARD = 0x02


def size_breakdown(c: CompressedActivation) -> Dict[str, int]:
    """Closed-form byte accounting of the blob for ``c``."""
    h = c.header
    n_pivot = int(np.count_nonzero(c.transformed))
    payload = int(((h.tile_size * c.tile_bits.astype(np.int64) + 7) // 8).sum())
    parts = {
        "header": HEADER_BYTES,
        "bitmap": (h.n_tokens + 7) // 8,
        "meta": META_BYTES * h.n_tiles + PIVOT_BYTES * n_pivot,
        "payload": payload,
    }
    parts["total"] = sum(parts.values())
    return parts


def encode_blob(c: CompressedActivation) -> bytes:
    c.validate()
    h = c.header
    if len(c.payload) != size_breakdown(c)["payload"]:
        raise DecodeError("payload length does not match the bit map")
    flags = (FLAG_ADAPTIVE if h.adaptive_alloc else 0) | (FLAG_HADAMARD if h.hadamard else 0)
    head = _HEADER.pack(MAGIC, VERSION, *h.shape, h.tile_size, h.b_hi, h.b_lo, flags)
    bitmap = np.packbits(c.bitmap.reshape(-1) == h.b_hi, bitorder="little")

    flag = c.transformed.astype(np.int64)
    sizes = META_BYTES + PIVOT_BYTES * flag
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1])).astype(np.int64)
    meta = np.zeros(int(sizes.sum()), dtype=np.uint8)
    meta[starts] = flag
    tr = np.flatnonzero(flag)
    piv = c.pivots[tr].astype("<u2").view(np.uint8).reshape(-1, 2)
    meta[starts[tr, None] + 1 + np.arange(2)] = piv
    body = starts + 1 + PIVOT_BYTES * flag
    meta[body[:, None] + np.arange(4)] = c.offsets.astype("<f4").view(np.uint8).reshape(-1, 4)
    meta[body[:, None] + 4 + np.arange(4)] = c.scales.astype("<f4").view(np.uint8).reshape(-1, 4)

    return b"".join((head, bitmap.tobytes(), meta.tobytes(), bytes(c.payload)))


def _need(buf: np.ndarray, end: int, what: str):
    if buf.size < end:
        raise TruncationError(f"blob truncated in {what}: need {end} bytes, have {buf.size}")


def decode_header(data: bytes) -> Header:
    if len(data) < len(MAGIC):
        raise TruncationError("blob shorter than its magic")
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}")
    if len(data) < 5:
        raise TruncationError("blob ends before the version byte")
    if data[4] != VERSION:
        raise VersionError(f"unsupported blob version {data[4]}")
    if len(data) < HEADER_BYTES:
        raise TruncationError("blob header truncated")
    _, _, b, s, c, g, b_hi, b_lo, flags = _HEADER.unpack_from(data)
    if min(b, s, c) < 1:
        raise FormatError(f"empty shape {(b, s, c)}")
    if g < 2 or not is_power_of_two(g) or c % g:
        raise FormatError(f"tile size {g} invalid for C={c}")
    if not 2 <= b_lo <= b_hi <= 8:
        raise FormatError(f"bit widths b_lo={b_lo}, b_hi={b_hi} out of range")
    if flags & ~(FLAG_ADAPTIVE | FLAG_HADAMARD):
        raise FormatError(f"unknown flag bits 0x{flags:02x}")
    return Header((b, s, c), g, b_hi, b_lo,
                  bool(flags & FLAG_ADAPTIVE), bool(flags & FLAG_HADAMARD))


def decode_blob(data) -> CompressedActivation:
    data = bytes(data)
    h = decode_header(data)
    buf = np.frombuffer(data, dtype=np.uint8)
    pos = HEADER_BYTES

    nbm = (h.n_tokens + 7) // 8
    _need(buf, pos + nbm, "bitmap")
    bits = np.unpackbits(buf[pos:pos + nbm], bitorder="little")
    if bits[h.n_tokens:].any():
        raise FormatError("non-zero padding in the token bitmap")
    bitmap = np.where(bits[: h.n_tokens] == 1, h.b_hi, h.b_lo).astype(np.uint8)
    bitmap = bitmap.reshape(h.shape[:2])
    pos += nbm

    n = h.n_tiles
    flag = np.zeros(n, dtype=np.int64)
    starts = np.zeros(n, dtype=np.int64)
    size = len(data)
    for i in range(n):
        if pos >= size:
            raise TruncationError(f"blob truncated in tile metadata {i}")
        f = data[pos]
        if f > 1:
            raise FormatError(f"tile {i}: transform flag {f} is not 0/1")
        starts[i] = pos
        flag[i] = f
        pos += META_BYTES + PIVOT_BYTES * f
    _need(buf, pos, "tile metadata")

    transformed = flag.astype(bool)
    pivots = np.zeros(n, dtype=np.uint16)
    tr = np.flatnonzero(transformed)
    pivots[tr] = buf[starts[tr, None] + 1 + np.arange(2)].copy().view("<u2").reshape(-1)
    body = starts + 1 + PIVOT_BYTES * flag
    offsets = buf[body[:, None] + np.arange(4)].copy().view("<f4").reshape(-1).astype(np.float32)
    scales = buf[body[:, None] + 4 + np.arange(4)].copy().view("<f4").reshape(-1).astype(np.float32)

    tile_bits = np.repeat(bitmap.reshape(-1), h.tiles_per_token).astype(np.int64)
    n_payload = int(((h.tile_size * tile_bits + 7) // 8).sum())
    _need(buf, pos + n_payload, "payload")
    if size > pos + n_payload:
        raise FormatError(f"{size - pos - n_payload} trailing bytes after payload")

    c = CompressedActivation(
        header=h, bitmap=bitmap, transformed=transformed, pivots=pivots,
        offsets=offsets, scales=scales, payload=data[pos:pos + n_payload],
    )
    c.validate()
    return c
