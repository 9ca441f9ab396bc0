"""In-memory form of a compressed activation tensor."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .bitpack import unpack_tiles
from .errors import DecodeError


@dataclass(frozen=True)
class Header:
    shape: Tuple[int, int, int]
    tile_size: int
    b_hi: int
    b_lo: int
    adaptive_alloc: bool
    hadamard: bool

    @property
    def n_tokens(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def tiles_per_token(self) -> int:
        return self.shape[2] // self.tile_size

    @property
    def n_tiles(self) -> int:
        return self.n_tokens * self.tiles_per_token


@dataclass(frozen=True)
class TileMeta:
    transformed: bool
    pivot: Optional[int]
    offset: float
    scale: float
    bits: int


@dataclass(eq=False)
class CompressedActivation:
    """Header, per-token bit widths, per-tile metadata and packed codes.

    Tile metadata is held column-wise (one array per field, tiles in
    ``(b, s, t)`` row-major order). ``pivots`` is 0 wherever ``transformed``
    is False. Offsets and scales are float32, exactly as they go on the wire.
    """

    header: Header
    bitmap: np.ndarray       # (B, S) uint8 bit widths
    transformed: np.ndarray  # (n_tiles,) bool
    pivots: np.ndarray       # (n_tiles,) uint16
    offsets: np.ndarray      # (n_tiles,) float32
    scales: np.ndarray       # (n_tiles,) float32
    payload: bytes

    @property
    def tile_bits(self) -> np.ndarray:
        return np.repeat(self.bitmap.reshape(-1), self.header.tiles_per_token)

    @property
    def metas(self) -> List[TileMeta]:
        return [self.meta(i) for i in range(self.header.n_tiles)]

    def meta(self, i: int) -> TileMeta:
        t = bool(self.transformed[i])
        return TileMeta(
            transformed=t,
            pivot=int(self.pivots[i]) if t else None,
            offset=float(self.offsets[i]),
            scale=float(self.scales[i]),
            bits=int(self.bitmap.reshape(-1)[i // self.header.tiles_per_token]),
        )

    def codes(self) -> np.ndarray:
        """Unpack the payload into an ``(n_tiles, G)`` uint8 matrix."""
        self.validate()
        return unpack_tiles(self.payload, self.header.tile_size, self.tile_bits)

    def mean_bits(self) -> float:
        return float(self.bitmap.mean())

    def validate(self):
        h = self.header
        n = h.n_tiles
        if self.bitmap.shape != h.shape[:2]:
            raise DecodeError(f"bitmap shape {self.bitmap.shape} != {h.shape[:2]}")
        if not np.isin(self.bitmap, (h.b_hi, h.b_lo)).all():
            raise DecodeError("bitmap holds a width other than b_hi/b_lo")
        for name in ("transformed", "pivots", "offsets", "scales"):
            if getattr(self, name).shape != (n,):
                raise DecodeError(f"{name} must have one entry per tile ({n})")
        if (self.pivots[self.transformed] >= h.tile_size).any():
            raise DecodeError("pivot outside its tile")
        if (self.pivots[~self.transformed] != 0).any():
            raise DecodeError("pivot set on an untransformed tile")
        if (self.transformed.any() and not h.hadamard):
            raise DecodeError("transformed tile while the Hadamard flag is off")
        if not (np.isfinite(self.offsets).all() and np.isfinite(self.scales).all()):
            raise DecodeError("non-finite tile offset or scale")
        if (self.scales < 0).any():
            raise DecodeError("negative tile scale")

    def same_as(self, other: "CompressedActivation") -> bool:
        """Structural equality with bit-for-bit comparison of float fields."""
        return (
            self.header == other.header
            and np.array_equal(self.bitmap, other.bitmap)
            and np.array_equal(self.transformed, other.transformed)
            and np.array_equal(self.pivots, other.pivots)
            and self.offsets.tobytes() == other.offsets.tobytes()
            and self.scales.tobytes() == other.scales.tobytes()
            and bytes(self.payload) == bytes(other.payload)
        )
