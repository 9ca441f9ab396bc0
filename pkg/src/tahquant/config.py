from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import ConfigError, UnsupportedTileSizeError


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class QuantConfig:
    """Hyperparameters of the forward-path activation quantizer.

    ``high_frac`` is the fraction of tokens (ranked by entropy) that get
    ``b_hi`` bits; it is clamped to [0, 1]. ``eps`` stabilises the L1
    normalisation, ``varsigma`` keeps the entropy log finite and ``varrho``
    keeps the outlier ratio finite.
    """

    tile_size: int = 32
    high_frac: float = 0.8
    b_hi: int = 4
    b_lo: int = 3
    tau: float = 2.0
    eps: float = 1e-6
    varsigma: float = 1e-12
    varrho: float = 1e-8
    adaptive_alloc: bool = True
    hadamard: bool = True

    def __post_init__(self):
        if not is_power_of_two(self.tile_size):
            raise UnsupportedTileSizeError(
                f"tile size must be a power of two, got {self.tile_size}")
        if self.tile_size < 2:
            raise ConfigError("tile size must be at least 2")
        if self.tile_size > 0xFFFF:
            raise ConfigError("tile size must fit in 16 bits")
        if not 2 <= self.b_lo <= self.b_hi <= 8:
            raise ConfigError(
                f"need 2 <= b_lo <= b_hi <= 8, got b_lo={self.b_lo}, b_hi={self.b_hi}")
        if not self.tau > 1:
            raise ConfigError(f"tau must exceed 1, got {self.tau}")
        for name in ("eps", "varsigma", "varrho"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        p = float(self.high_frac)
        if p != p:
            raise ConfigError("high_frac is NaN")
        object.__setattr__(self, "high_frac", min(max(p, 0.0), 1.0))

    def with_(self, **changes) -> "QuantConfig":
        return replace(self, **changes)

    def n_tiles(self, channels: int) -> int:
        if channels % self.tile_size:
            raise ConfigError(
                f"tile size {self.tile_size} does not divide C={channels}")
        return channels // self.tile_size
