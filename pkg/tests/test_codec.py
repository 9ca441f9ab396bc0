import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tahquant import QuantConfig, decode_blob, encode_blob, pack_codes, quantize_activation, size_breakdown, unpack_codes
from tahquant.bitpack import pack_tiles, unpack_tiles
from tahquant.codec import HEADER_BYTES
from tahquant.errors import (
    CodeRangeError, CorruptPayloadError, DecodeError, FormatError, TruncationError, VersionError,
)

from factories import random_compressed
from exhaustive import sweep


def reference_pack(codes, bits):
    """Bit-by-bit packer: stream bit i is bit i % 8 of byte i // 8."""
    stream = [(int(c) >> k) & 1 for c in codes for k in range(bits)]
    out = bytearray((len(stream) + 7) // 8)
    for i, bit in enumerate(stream):
        out[i // 8] |= bit << (i % 8)
    return bytes(out)


# --- packing -------------------------------------------------------------------

def test_pack_examples():
    assert pack_codes([15], 4) == b"\x0f"
    assert pack_codes([], 4) == b""
    assert pack_codes([1, 2, 3], 3) == bytes([0xD1, 0x00])
    assert reference_pack([1, 2, 3], 3) == bytes([0xD1, 0x00])


def test_unpack_examples():
    assert unpack_codes(b"\x0f", 1, 4).tolist() == [15]
    assert unpack_codes(bytes([0xD1, 0x00]), 3, 3).tolist() == [1, 2, 3]
    assert unpack_codes(b"", 0, 3).tolist() == []


@pytest.mark.parametrize("bits", range(1, 9))
@pytest.mark.parametrize("n", [1, 2, 3, 5, 7, 8, 9, 13, 32, 64, 100])
def test_pack_matches_reference(bits, n):
    rng = np.random.default_rng(bits * 1000 + n)
    codes = rng.integers(0, 1 << bits, size=n)
    packed = pack_codes(codes, bits)
    assert packed == reference_pack(codes, bits)
    assert len(packed) == (n * bits + 7) // 8
    assert unpack_codes(packed, n, bits).tolist() == codes.tolist()


@pytest.mark.parametrize("length", range(1, 9))
def test_exhaustive_3bit(length):
    assert sweep(length, 3) == 8 ** length


@pytest.mark.parametrize("length", range(1, 7))
def test_exhaustive_4bit_short(length):
    # lengths 7 and 8 (2**28 and 2**32 sequences) run in the acceptance suite
    assert sweep(length, 4) == 16 ** length


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 8).flatmap(lambda b: st.tuples(st.just(b), st.lists(st.integers(0, (1 << b) - 1), max_size=70))))
def test_pack_property(case):
    bits, codes = case
    packed = pack_codes(codes, bits)
    assert packed == reference_pack(codes, bits)
    assert unpack_codes(packed, len(codes), bits).tolist() == codes


@pytest.mark.parametrize("codes, bits", [([16], 4), ([8], 3), ([-1], 4), ([256], 8), ([2], 1)])
def test_pack_range_error(codes, bits):
    with pytest.raises(CodeRangeError):
        pack_codes(codes, bits)


@pytest.mark.parametrize("bits", [0, 9])
def test_bad_width(bits):
    with pytest.raises(CodeRangeError):
        pack_codes([0], bits)


def test_unpack_truncation():
    with pytest.raises(TruncationError):
        unpack_codes(b"\x00", 3, 3)


@pytest.mark.parametrize("bits, n, data", [(3, 3, b"\xd1\x80"), (4, 1, b"\xf0"), (6, 1, b"\x40"), (2, 3, b"\xc0")])
def test_nonzero_padding_rejected(bits, n, data):
    with pytest.raises(CorruptPayloadError):
        unpack_codes(data, n, bits)


def test_tiles_mixed_widths():
    rng = np.random.default_rng(0)
    bits = np.array([3, 4, 4, 3, 8, 2])
    codes = (rng.integers(0, 256, size=(6, 13)) % (1 << bits[:, None])).astype(np.uint8)
    payload = pack_tiles(codes, bits)
    assert payload == b"".join(reference_pack(row, b) for row, b in zip(codes, bits))
    assert np.array_equal(unpack_tiles(payload, 13, bits), codes)
    with pytest.raises(TruncationError):
        unpack_tiles(payload[:-1], 13, bits)
    with pytest.raises(CorruptPayloadError):
        unpack_tiles(payload + b"\x00", 13, bits)


# --- blobs ---------------------------------------------------------------------

def test_blob_round_trip_random_structures():
    rng = np.random.default_rng(0)
    for _ in range(300):
        c = random_compressed(rng)
        blob = encode_blob(c)
        back = decode_blob(blob)
        assert back.same_as(c)
        assert encode_blob(back) == blob
        assert len(blob) == size_breakdown(c)["total"]


def test_blob_from_quantizer():
    x = np.random.default_rng(1).standard_normal((2, 8, 64))
    x[..., 7] *= 30
    c = quantize_activation(x, QuantConfig())
    blob = encode_blob(c)
    assert decode_blob(blob).same_as(c)
    assert encode_blob(quantize_activation(x, QuantConfig())) == blob


def test_size_formula():
    x = np.random.default_rng(2).standard_normal((2, 5, 96))
    x[..., 40] *= 25
    cfg = QuantConfig(tile_size=32)
    c = quantize_activation(x, cfg)
    n_tiles = 2 * 5 * 3
    n_tr = int(c.transformed.sum())
    payload = sum((32 * int(b) + 7) // 8 for b in np.repeat(c.bitmap.reshape(-1), 3))
    expected = 22 + (10 + 7) // 8 + 9 * n_tiles + 2 * n_tr + payload
    assert n_tr > 0
    assert len(encode_blob(c)) == expected == size_breakdown(c)["total"]


def test_header_layout():
    c = quantize_activation(np.ones((3, 2, 64)), QuantConfig(tile_size=16, b_hi=5, b_lo=2, adaptive_alloc=False))
    head = encode_blob(c)[:HEADER_BYTES]
    assert head == struct.pack("<4sBIIIHBBB", b"TAHQ", 1, 3, 2, 64, 16, 5, 2, 0b10)


@pytest.mark.parametrize("i", range(4))
def test_magic_byte_flip(i):
    blob = bytearray(encode_blob(random_compressed(np.random.default_rng(i))))
    blob[i] ^= 0xFF
    with pytest.raises(FormatError):
        decode_blob(bytes(blob))


def test_version_mismatch():
    blob = bytearray(encode_blob(random_compressed(np.random.default_rng(0))))
    blob[4] = 2
    with pytest.raises(VersionError):
        decode_blob(bytes(blob))


def test_every_truncation_is_reported():
    blob = encode_blob(random_compressed(np.random.default_rng(3)))
    for cut in range(len(blob)):
        with pytest.raises(TruncationError):
            decode_blob(blob[:cut])


def test_trailing_bytes_rejected():
    blob = encode_blob(random_compressed(np.random.default_rng(4)))
    with pytest.raises(FormatError):
        decode_blob(blob + b"\x00")


@pytest.mark.parametrize("field", ["zero_batch", "tile_size", "b_hi", "b_lo_above_b_hi", "flags"])
def test_bad_header_fields(field):
    c = quantize_activation(np.ones((1, 1, 32)), QuantConfig())
    blob = bytearray(encode_blob(c))
    if field == "zero_batch":
        blob[5:9] = struct.pack("<I", 0)
    elif field == "tile_size":
        blob[17:19] = struct.pack("<H", 24)
    elif field == "b_hi":
        blob[19] = 9
    elif field == "b_lo_above_b_hi":
        blob[19], blob[20] = 3, 4
    else:
        blob[21] = 0x04
    with pytest.raises(FormatError):
        decode_blob(bytes(blob))


def test_bad_meta_flag_and_pivot():
    c = quantize_activation(np.ones((1, 1, 32)), QuantConfig())
    blob = bytearray(encode_blob(c))
    meta = HEADER_BYTES + 1
    bad = bytearray(blob)
    bad[meta] = 7
    with pytest.raises(DecodeError):
        decode_blob(bytes(bad))
    # transform flag set: pivot 40 is outside a 32-wide tile
    forged = blob[:meta] + bytes([1]) + struct.pack("<H", 40) + blob[meta + 1:]
    with pytest.raises(DecodeError):
        decode_blob(bytes(forged))


def test_nonzero_bitmap_padding():
    c = quantize_activation(np.ones((1, 3, 32)), QuantConfig())
    blob = bytearray(encode_blob(c))
    blob[HEADER_BYTES] |= 0x80
    with pytest.raises(FormatError):
        decode_blob(bytes(blob))


def test_corrupt_code_in_flat_tile():
    from tahquant import dequantize_activation
    c = quantize_activation(np.ones((1, 1, 32)), QuantConfig())
    blob = bytearray(encode_blob(c))
    blob[-1] = 0x01
    with pytest.raises(CorruptPayloadError):
        dequantize_activation(decode_blob(bytes(blob)))
