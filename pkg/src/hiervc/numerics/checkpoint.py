"""Versioned binary parameter checkpoints.

Layout (all integers little-endian)::

    magic    b"HVCK"
    version  u16
    hash     32 bytes   SHA-256 of the canonical model-config JSON
    cfg_len  u32, then cfg_len bytes of UTF-8 config JSON
    count    u32        number of parameter records
    records  name_len u16, name (UTF-8), rank u8, dims u32 * rank,
             values float32 LE * prod(dims)
"""
from __future__ import annotations

import io
import json
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from ..errors import ConfigurationError, FormatError, TruncationError

MAGIC = b"HVCK"
VERSION = 1


def _read(f: BinaryIO, n: int) -> bytes:
    b = f.read(n)
    if len(b) != n:
        raise TruncationError(f"checkpoint truncated: wanted {n} bytes, got {len(b)}")
    return b


def dump_params(params: list[tuple[str, np.ndarray]], config_json: str, config_hash: bytes) -> bytes:
    if len(config_hash) != 32:
        raise FormatError("config hash must be 32 bytes")
    out = io.BytesIO()
    cfg = config_json.encode()
    out.write(MAGIC + struct.pack("<H", VERSION) + config_hash + struct.pack("<I", len(cfg)) + cfg)
    out.write(struct.pack("<I", len(params)))
    for name, arr in params:
        nb = name.encode()
        arr = np.asarray(arr)
        out.write(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        out.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return out.getvalue()


def parse(data: bytes) -> tuple[bytes, str, dict[str, np.ndarray]]:
    """Return ``(config_hash, config_json, {name: float32 array})``."""
    f = io.BytesIO(data)
    if _read(f, 4) != MAGIC:
        raise FormatError("not a checkpoint (bad magic)")
    (version,) = struct.unpack("<H", _read(f, 2))
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    chash = _read(f, 32)
    (clen,) = struct.unpack("<I", _read(f, 4))
    cfg = _read(f, clen).decode()
    (count,) = struct.unpack("<I", _read(f, 4))
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", _read(f, 2))
        name = _read(f, nlen).decode()
        (rank,) = struct.unpack("<B", _read(f, 1))
        dims = struct.unpack(f"<{rank}I", _read(f, 4 * rank))
        n = int(np.prod(dims, dtype=np.int64))
        params[name] = np.frombuffer(_read(f, 4 * n), dtype="<f4").reshape(dims).copy()
    if f.read(1):
        raise FormatError("trailing bytes after checkpoint records")
    return chash, cfg, params


def save_model(model, path: str | Path) -> None:
    cfg = model.cfg
    params = [(n, p.data) for n, p in model.named_parameters()]
    Path(path).write_bytes(dump_params(params, cfg.canonical_json(), cfg.config_hash()))


def load_state(model, data: bytes) -> None:
    """Copy parameters from checkpoint bytes into ``model``, verifying the config hash."""
    chash, _, params = parse(data)
    if chash != model.cfg.config_hash():
        raise ConfigurationError("checkpoint config hash does not match the model config")
    own = dict(model.named_parameters())
    if set(own) != set(params):
        missing = sorted(set(own) - set(params))
        extra = sorted(set(params) - set(own))
        raise FormatError(f"checkpoint parameter names differ: missing={missing[:3]} extra={extra[:3]}")
    for name, p in own.items():
        if params[name].shape != p.shape:
            raise FormatError(f"parameter {name}: shape {params[name].shape} != {p.shape}")
        p.data = params[name].astype(p.data.dtype)


def load_model(path: str | Path):
    """Rebuild a model from the config embedded in a checkpoint, then load its weights."""
    from ..model import HierarchicalVideoModel, ModelConfig

    data = Path(path).read_bytes()
    chash, cfg_json, _ = parse(data)
    cfg = ModelConfig.from_dict(json.loads(cfg_json))
    if cfg.config_hash() != chash:
        raise FormatError("embedded config does not match the stored config hash")
    model = HierarchicalVideoModel(cfg)
    load_state(model, data)
    return model
