"""Tile-wise adaptive Hadamard activation quantization for pipeline-parallel training."""
from .codec import decode_blob, encode_blob, pack_codes, size_breakdown, unpack_codes
from .compressed import CompressedActivation, Header, TileMeta
from .config import QuantConfig
from .errors import *  # noqa: F401,F403
from .hadamard import forward_hadamard, inverse_hadamard
from .quantizer import (
    allocate_bits, dequantize_activation, dequantize_tile, detect_outlier, naive_dequantize,
    naive_quantize, quantize_activation, quantize_tile, token_entropy,
)
from .tensorfile import load_tensor, save_tensor

__version__ = "0.1.0"
