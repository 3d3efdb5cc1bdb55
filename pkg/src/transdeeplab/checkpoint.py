"""TDLC checkpoint container.

Layout (little-endian)::

    "TDLC" | u32 version=1 | u32 n_params | n_params x (u32 name_len, name utf-8, TDL1 tensor)
    | u32 n_opt | n_opt x (same entry layout) | u32 epoch | u64 rng_state
    | u32 config_len | config text (key = value lines, utf-8)

The trailing config section lets a checkpoint rebuild its own model.
Tensors are stored as float32.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Optional

import numpy as np

from .config import ConfigError, ModelConfig, model_config_from_text, model_config_to_text
from .model import TransDeepLab, build
from .tdl import (
    CorruptFileError,
    _read_exact,
    atomic_write_bytes,
    read_tensor_from,
    write_tensor_to,
)

MAGIC = b"TDLC"
VERSION = 1


class CheckpointShapeError(ValueError):
    """A stored tensor does not fit the parameter the config declares."""


@dataclass
class Checkpoint:
    config: ModelConfig
    parameters: dict
    optimizer: dict = field(default_factory=dict)
    epoch: int = 0
    rng_state: int = 0

    def build_model(self) -> TransDeepLab:
        model = build(self.config)
        own = dict(model.named_parameters())
        if set(own) != set(self.parameters):
            missing = sorted(set(own) - set(self.parameters))
            extra = sorted(set(self.parameters) - set(own))
            raise CheckpointShapeError(f"parameter names differ from config: missing {missing[:5]}, extra {extra[:5]}")
        for name, p in own.items():
            value = self.parameters[name]
            if value.shape != p.shape:
                raise CheckpointShapeError(f"{name}: stored {value.shape}, config expects {p.shape}")
            p.data = np.array(value, dtype=p.dtype)
        return model


def _write_section(buf: BinaryIO, tensors: dict) -> None:
    buf.write(struct.pack("<I", len(tensors)))
    for name, value in tensors.items():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        write_tensor_to(buf, value)


def _read_section(buf: BinaryIO) -> dict:
    (count,) = struct.unpack("<I", _read_exact(buf, 4))
    out = {}
    for _ in range(count):
        (n,) = struct.unpack("<I", _read_exact(buf, 4))
        try:
            name = _read_exact(buf, n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptFileError(f"parameter name is not utf-8: {exc}") from None
        if name in out:
            raise CorruptFileError(f"duplicate tensor name {name!r}")
        out[name] = read_tensor_from(buf)
    return out


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    _write_section(buf, ckpt.parameters)
    _write_section(buf, ckpt.optimizer)
    buf.write(struct.pack("<IQ", ckpt.epoch, ckpt.rng_state & (2**64 - 1)))
    text = model_config_to_text(ckpt.config).encode("utf-8")
    buf.write(struct.pack("<I", len(text)))
    buf.write(text)
    return buf.getvalue()


def decode_checkpoint(payload: bytes) -> Checkpoint:
    buf = io.BytesIO(payload)
    magic = _read_exact(buf, 4)
    if magic != MAGIC:
        raise CorruptFileError(f"bad checkpoint magic {magic!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<I", _read_exact(buf, 4))
    if version != VERSION:
        raise CorruptFileError(f"unsupported checkpoint version {version}")
    params = _read_section(buf)
    optimizer = _read_section(buf)
    epoch, rng_state = struct.unpack("<IQ", _read_exact(buf, 12))
    (n,) = struct.unpack("<I", _read_exact(buf, 4))
    try:
        config = model_config_from_text(_read_exact(buf, n).decode("utf-8"))
    except (UnicodeDecodeError, ConfigError) as exc:
        raise CorruptFileError(f"embedded config unreadable: {exc}") from None
    if buf.read(1):
        raise CorruptFileError("trailing bytes after checkpoint payload")
    return Checkpoint(config, params, optimizer, epoch, rng_state)


def save_checkpoint(model: TransDeepLab, path, optimizer: Optional[dict] = None,
                    epoch: int = 0, rng_state: int = 0) -> None:
    ckpt = Checkpoint(model.config, model.state_dict(), dict(optimizer or {}), epoch, rng_state)
    atomic_write_bytes(path, encode_checkpoint(ckpt))


def read_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())


def load_checkpoint(path) -> TransDeepLab:
    return read_checkpoint(path).build_model()


def manifest(path) -> list[str]:
    return list(read_checkpoint(path).parameters)
