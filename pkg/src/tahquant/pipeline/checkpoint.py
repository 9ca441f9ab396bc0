"""``TAHM`` checkpoints: named parameter tensors stored as ``.taht`` blobs.

Layout (little-endian)::

    "TAHM" | version u8 | step u32 | count u16
    count x ( name_len u8 | name utf-8 | rank u8 | blob_len u32 | .taht blob )

Rank-1 and rank-2 tensors are stored as ``(1, 1, n)`` and ``(1, r, c)``.
"""
from __future__ import annotations

import struct
from typing import Dict, Tuple

import numpy as np

from ..errors import FormatError, TruncationError, VersionError
from ..tensorfile import decode_tensor, encode_tensor

MAGIC = b"TAHM"
VERSION = 1
_HEAD = struct.Struct("<4sBIH")


def encode_checkpoint(tensors: Dict[str, np.ndarray], step: int = 0) -> bytes:
    parts = [_HEAD.pack(MAGIC, VERSION, step, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim > 3:
            raise ValueError(f"{name}: rank {arr.ndim} not storable")
        blob = encode_tensor(arr.reshape((1,) * (3 - arr.ndim) + arr.shape))
        key = name.encode()
        parts.append(struct.pack("<B", len(key)) + key + struct.pack("<BI", arr.ndim, len(blob)) + blob)
    return b"".join(parts)


def decode_checkpoint(data: bytes) -> Tuple[Dict[str, np.ndarray], int]:
    if len(data) < _HEAD.size:
        raise TruncationError("checkpoint header truncated")
    magic, version, step, count = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise VersionError(f"unsupported checkpoint version {version}")
    pos, out = _HEAD.size, {}
    try:
        for _ in range(count):
            n = data[pos]
            name = data[pos + 1:pos + 1 + n].decode()
            pos += 1 + n
            rank, size = struct.unpack_from("<BI", data, pos)
            pos += 5
            if pos + size > len(data):
                raise TruncationError(f"tensor {name!r} truncated")
            t = decode_tensor(data[pos:pos + size])
            pos += size
            out[name] = t.reshape(t.shape[3 - rank:]) if rank else t.reshape(())
    except (IndexError, struct.error) as exc:
        raise TruncationError("checkpoint truncated") from exc
    return out, step


def save_checkpoint(path, params, momentum=None, step: int = 0) -> None:
    tensors = dict(params)
    if momentum is not None:
        tensors.update({f"m.{k}": v for k, v in momentum.items()})
    with open(path, "wb") as f:
        f.write(encode_checkpoint(tensors, step))


def load_checkpoint(path):
    """Return ``(params, momentum, step)``."""
    with open(path, "rb") as f:
        tensors, step = decode_checkpoint(f.read())
    params = {k: v for k, v in tensors.items() if not k.startswith("m.")}
    momentum = {k[2:]: v for k, v in tensors.items() if k.startswith("m.")}
    return params, momentum, step
