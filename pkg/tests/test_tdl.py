import struct

import numpy as np
import pytest

from transdeeplab.tdl import (
    CorruptFileError,
    TruncatedFileError,
    encode_tensor,
    load_tensor,
    save_tensor,
)


def test_layout_is_magic_rank_extents_f32_le():
    payload = encode_tensor(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    assert payload[:4] == b"TDL1"
    assert struct.unpack("<III", payload[4:16]) == (2, 2, 3)
    np.testing.assert_array_equal(np.frombuffer(payload[16:], dtype="<f4"), np.arange(1, 7))
    assert len(payload) == 16 + 6 * 4


def test_roundtrip(tmp_path, rng):
    x = rng.normal(size=(3, 5, 7)).astype(np.float32)
    save_tensor(tmp_path / "x.tdl", x)
    y = load_tensor(tmp_path / "x.tdl")
    assert y.dtype == np.float32
    np.testing.assert_array_equal(x, y)


def test_scalar_roundtrip(tmp_path):
    save_tensor(tmp_path / "s.tdl", np.float32(2.5))
    y = load_tensor(tmp_path / "s.tdl")
    assert y.shape == () and y == 2.5


def test_bad_magic(tmp_path):
    path = tmp_path / "x.tdl"
    save_tensor(path, np.ones(3))
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CorruptFileError):
        load_tensor(path)


def test_truncated(tmp_path):
    path = tmp_path / "x.tdl"
    save_tensor(path, np.ones((4, 4)))
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(TruncatedFileError):
        load_tensor(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "x.tdl"
    save_tensor(path, np.ones(2))
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(CorruptFileError):
        load_tensor(path)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    save_tensor(tmp_path / "a.tdl", np.ones(2))
    save_tensor(tmp_path / "a.tdl", np.zeros(2))
    assert [p.name for p in tmp_path.iterdir()] == ["a.tdl"]
    np.testing.assert_array_equal(load_tensor(tmp_path / "a.tdl"), np.zeros(2))
