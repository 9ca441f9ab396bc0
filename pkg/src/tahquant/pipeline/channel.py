"""Compressors that turn tensors into wire bytes, and ordered byte channels."""
from __future__ import annotations

import queue
import socket
import struct
import threading
from dataclasses import dataclass

import numpy as np

from ..codec import decode_blob, encode_blob, decode_header, HEADER_BYTES, MAGIC as BLOB_MAGIC
from ..config import QuantConfig
from ..quantizer import dequantize_activation, naive_dequantize, naive_quantize, quantize_activation
from ..tensorfile import decode_tensor, encode_tensor, DTYPES, MAGIC as TENSOR_MAGIC


@dataclass(frozen=True)
class Passthrough:
    """Lossless: ships the raw tensor as a ``.taht`` blob in its own dtype."""

    def encode(self, t: np.ndarray) -> bytes:
        return encode_tensor(t)

    def decode(self, blob: bytes) -> np.ndarray:
        return decode_tensor(blob).astype(np.float64)


@dataclass(frozen=True)
class TahCompressor:
    config: QuantConfig

    def encode(self, t: np.ndarray) -> bytes:
        return encode_blob(quantize_activation(t, self.config))

    def decode(self, blob: bytes) -> np.ndarray:
        return dequantize_activation(decode_blob(blob), dtype=np.float64)


@dataclass(frozen=True)
class NaiveCompressor:
    bits: int = 6
    tile_size: int = 32

    def encode(self, t: np.ndarray) -> bytes:
        return encode_blob(naive_quantize(t, self.bits, self.tile_size))

    def decode(self, blob: bytes) -> np.ndarray:
        return naive_dequantize(decode_blob(blob), dtype=np.float64)


@dataclass(frozen=True)
class ZeroCompressor:
    """Drops the tensor entirely; the receiver sees zeros of the right shape."""

    def encode(self, t: np.ndarray) -> bytes:
        return encode_tensor(np.zeros(np.shape(t), dtype=np.float32))

    def decode(self, blob: bytes) -> np.ndarray:
        return decode_tensor(blob).astype(np.float64)


def blob_mean_bits(blob: bytes) -> float:
    """Mean bits per element carried by a blob (token bit widths for ``.tahq``)."""
    if blob[:4] == BLOB_MAGIC:
        h = decode_header(blob)
        n = h.n_tokens
        flags = np.unpackbits(np.frombuffer(blob, np.uint8, (n + 7) // 8, HEADER_BYTES),
                              bitorder="little")[:n]
        n_hi = int(flags.sum())
        return (n_hi * h.b_hi + (n - n_hi) * h.b_lo) / n
    if blob[:4] == TENSOR_MAGIC:
        return 8.0 * DTYPES[blob[5]].itemsize
    raise ValueError("unknown blob type")


class QueueChannel:
    """Ordered, lossless in-process byte pipe."""

    def __init__(self):
        self._q: "queue.Queue[bytes]" = queue.Queue()

    def send(self, data: bytes) -> None:
        self._q.put(bytes(data))

    def recv(self, timeout: float | None = None) -> bytes:
        return self._q.get(timeout=timeout)

    def close(self) -> None:
        pass


class SocketChannel:
    """Same contract over a loopback socket pair, length-prefixed frames.

    Sends happen from a helper thread so a large frame cannot deadlock a
    single-threaded caller that sends before it receives.
    """

    _LEN = struct.Struct("<Q")

    def __init__(self):
        self._tx, self._rx = socket.socketpair()
        self._pending: "queue.Queue[bytes | None]" = queue.Queue()
        self._writer = threading.Thread(target=self._write_loop, daemon=True)
        self._writer.start()

    def _write_loop(self):
        while True:
            data = self._pending.get()
            if data is None:
                return
            self._tx.sendall(self._LEN.pack(len(data)) + data)

    def send(self, data: bytes) -> None:
        self._pending.put(bytes(data))

    def _read(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            chunk = self._rx.recv(n - len(buf))
            if not chunk:
                raise ConnectionError("channel closed mid-frame")
            buf += chunk
        return bytes(buf)

    def recv(self, timeout: float | None = None) -> bytes:
        self._rx.settimeout(timeout)
        (n,) = self._LEN.unpack(self._read(self._LEN.size))
        return self._read(n)

    def close(self) -> None:
        self._pending.put(None)
        self._writer.join()
        self._tx.close()
        self._rx.close()


def make_channel(kind: str = "queue"):
    if kind == "queue":
        return QueueChannel()
    if kind == "socket":
        return SocketChannel()
    raise ValueError(f"unknown channel kind {kind!r}")
