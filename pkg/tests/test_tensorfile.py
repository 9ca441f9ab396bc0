import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from tahquant import load_tensor, save_tensor
from tahquant.errors import FormatError, InvalidInputError, TruncationError, VersionError
from tahquant.pipeline.checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from tahquant.tensorfile import HEADER_BYTES, decode_tensor, encode_tensor


def test_layout_float32():
    t = np.arange(6, dtype=np.float32).reshape(1, 2, 3)
    blob = encode_tensor(t)
    assert blob[:HEADER_BYTES] == struct.pack("<4sBBIII", b"TAHT", 1, 0, 1, 2, 3)
    assert len(blob) == HEADER_BYTES + 4 * t.size
    assert blob[HEADER_BYTES:] == t.astype("<f4").tobytes()


def test_float64_is_kept_lossless():
    t = np.random.default_rng(0).standard_normal((2, 3, 4))
    blob = encode_tensor(t)
    assert blob[5] == 1
    assert decode_tensor(blob).tobytes() == t.tobytes()


def test_other_dtypes_stored_as_float32():
    t = np.arange(8, dtype=np.int32).reshape(2, 2, 2)
    back = decode_tensor(encode_tensor(t))
    assert back.dtype == np.float32 and (back == t).all()


@settings(max_examples=100, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 3), st.integers(1, 4), st.integers(1, 5)),
              elements=st.floats(width=32, allow_nan=True, allow_infinity=True)))
def test_round_trip_bit_exact(t):
    assert decode_tensor(encode_tensor(t)).tobytes() == t.tobytes()


def test_file_round_trip(tmp_path):
    t = np.random.default_rng(1).standard_normal((2, 2, 8)).astype(np.float32)
    save_tensor(tmp_path / "t.taht", t)
    assert load_tensor(tmp_path / "t.taht").tobytes() == t.tobytes()


def test_errors():
    blob = encode_tensor(np.ones((1, 1, 2), dtype=np.float32))
    with pytest.raises(FormatError):
        decode_tensor(b"XAHT" + blob[4:])
    with pytest.raises(VersionError):
        decode_tensor(blob[:4] + b"\x02" + blob[5:])
    with pytest.raises(FormatError):
        decode_tensor(blob[:5] + b"\x07" + blob[6:])
    with pytest.raises(FormatError):
        decode_tensor(blob + b"\x00")
    for cut in range(len(blob)):
        with pytest.raises(TruncationError):
            decode_tensor(blob[:cut])
    with pytest.raises(InvalidInputError):
        encode_tensor(np.ones((2, 2)))


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    params = {"W1": rng.standard_normal((8, 64)), "b1": rng.standard_normal(64), "W2": rng.standard_normal((64, 4))}
    mom = {k: v * 0.5 for k, v in params.items()}
    save_checkpoint(tmp_path / "c.tahm", params, mom, step=17)
    p2, m2, step = load_checkpoint(tmp_path / "c.tahm")
    assert step == 17
    for k in params:
        assert p2[k].shape == params[k].shape and p2[k].tobytes() == params[k].tobytes()
        assert m2[k].tobytes() == mom[k].tobytes()


def test_checkpoint_errors():
    blob = encode_checkpoint({"x": np.ones(3)}, 1)
    assert blob[:4] == b"TAHM"
    with pytest.raises(FormatError):
        decode_checkpoint(b"NOPE" + blob[4:])
    with pytest.raises(VersionError):
        decode_checkpoint(blob[:4] + b"\x09" + blob[5:])
    with pytest.raises(TruncationError):
        decode_checkpoint(blob[:-3])
