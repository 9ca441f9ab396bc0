"""``.taht`` raw tensor files.

Layout (little-endian): ``"TAHT" | version u8 | dtype u8 | B u32 | S u32 | C u32``
followed by the values in row-major order. dtype 0 is float32, dtype 1 is
float64 (used for lossless 64-bit transport inside the pipeline).
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .errors import FormatError, InvalidInputError, TruncationError, VersionError

MAGIC = b"TAHT"
VERSION = 1
_HEADER = struct.Struct("<4sBBIII")
HEADER_BYTES = _HEADER.size  # 18
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def encode_tensor(t, dtype=None) -> bytes:
    a = np.asarray(t)
    if a.ndim != 3 or min(a.shape) < 1:
        raise InvalidInputError(f"tensor must be non-empty rank 3, got shape {a.shape}")
    dt = np.dtype(dtype) if dtype is not None else a.dtype
    if dt not in _CODES:
        dt = np.dtype(np.float32)
    code = _CODES[dt]
    head = _HEADER.pack(MAGIC, VERSION, code, *a.shape)
    return head + np.ascontiguousarray(a, dtype=DTYPES[code]).tobytes()


def decode_tensor(data) -> np.ndarray:
    data = bytes(data)
    if len(data) < 4:
        raise TruncationError("tensor file shorter than its magic")
    if data[:4] != MAGIC:
        raise FormatError(f"bad tensor magic {data[:4]!r}")
    if len(data) < HEADER_BYTES:
        raise TruncationError("tensor header truncated")
    _, version, code, b, s, c = _HEADER.unpack_from(data)
    if version != VERSION:
        raise VersionError(f"unsupported tensor file version {version}")
    if code not in DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    dt = DTYPES[code]
    n = b * s * c
    expect = HEADER_BYTES + dt.itemsize * n
    if len(data) < expect:
        raise TruncationError(f"tensor file has {len(data)} bytes, expected {expect}")
    if len(data) > expect:
        raise FormatError(f"{len(data) - expect} trailing bytes in tensor file")
    out = np.frombuffer(data, dtype=dt, count=n, offset=HEADER_BYTES).reshape(b, s, c)
    return out.astype(dt.newbyteorder("="))


def save_tensor(path: str | os.PathLike, t, dtype=None) -> None:
    with open(path, "wb") as f:
        f.write(encode_tensor(t, dtype))


def load_tensor(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_tensor(f.read())
