"""TDL1 tensor blobs.

Layout: magic ``TDL1``, u32 little-endian rank, ``rank`` u32 extents, then the
elements as row-major float32 little-endian.
"""

from __future__ import annotations

import os
import struct
import tempfile
from typing import BinaryIO

import numpy as np

MAGIC = b"TDL1"


class TDLFormatError(ValueError):
    """Base class for malformed TDL1 / TDLC content."""


class CorruptFileError(TDLFormatError):
    """Wrong magic bytes or otherwise unparseable content."""


class TruncatedFileError(TDLFormatError):
    """The stream ended before the declared content."""


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    buf = stream.read(n)
    if len(buf) != n:
        raise TruncatedFileError(f"expected {n} bytes, got {len(buf)}")
    return buf


def encode_tensor(array) -> bytes:
    arr = np.asarray(array, dtype="<f4")
    header = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + np.ascontiguousarray(arr).tobytes()


def write_tensor_to(stream: BinaryIO, array) -> None:
    stream.write(encode_tensor(array))


def read_tensor_from(stream: BinaryIO) -> np.ndarray:
    magic = _read_exact(stream, 4)
    if magic != MAGIC:
        raise CorruptFileError(f"bad tensor magic {magic!r}, expected {MAGIC!r}")
    (rank,) = struct.unpack("<I", _read_exact(stream, 4))
    if rank > 32:
        raise CorruptFileError(f"implausible tensor rank {rank}")
    shape = struct.unpack(f"<{rank}I", _read_exact(stream, 4 * rank))
    count = int(np.prod(shape, dtype=np.int64))
    data = np.frombuffer(_read_exact(stream, 4 * count), dtype="<f4")
    return data.reshape(shape).astype(np.float32)


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write to a temporary sibling, then rename over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_tensor(path, array) -> None:
    atomic_write_bytes(path, encode_tensor(array))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        arr = read_tensor_from(fh)
        if fh.read(1):
            raise CorruptFileError(f"{path}: trailing bytes after tensor payload")
    return arr
