"""Layered bitstream container.

All integers are little-endian.

Sequence header (57 bytes)::

    magic        b"HVCS"
    version      u16
    config_hash  32 bytes
    width        u32   frame width before padding
    height       u32   frame height before padding
    frame_count  u32
    gop_size     u32
    lambda_index u8    index into LAMBDA_MENU, 255 when not on the menu
    precision    u8    32 or 64, float width used by encoder and decoder
    num_scales   u8

Frame record::

    frame_type   u8    0 intra, 1 inter
    presence     u16   bit l set when the chunk of scale l is in the record
    chunk_count  u8
    chunks       scale u8, length u32, crc32 u32, payload (length bytes)

Chunks are ordered coarse to fine, so every prefix of a record is decodable.
"""
from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass, field
from typing import BinaryIO

from ..errors import ConfigurationError, FormatError, TruncationError

MAGIC = b"HVCS"
VERSION = 1
LAMBDA_MENU = (256.0, 512.0, 1024.0, 2048.0)
LAMBDA_CUSTOM = 255
INTRA, INTER = 0, 1
MAX_SCALES = 16

_HEADER = struct.Struct("<4sH32sIIIIBBB")
_RECORD = struct.Struct("<BHB")
_CHUNK = struct.Struct("<BII")


def lambda_index(lmbda: float) -> int:
    return LAMBDA_MENU.index(float(lmbda)) if float(lmbda) in LAMBDA_MENU else LAMBDA_CUSTOM


@dataclass
class SequenceHeader:
    config_hash: bytes
    width: int
    height: int
    frame_count: int
    gop_size: int
    num_scales: int
    lambda_index: int = LAMBDA_CUSTOM
    precision: int = 32
    version: int = VERSION

    def __post_init__(self):
        if self.gop_size < 1:
            raise ConfigurationError(f"gop_size must be >= 1, got {self.gop_size}")
        if len(self.config_hash) != 32:
            raise ConfigurationError("config_hash must be 32 bytes")
        if not 1 <= self.num_scales <= MAX_SCALES:
            raise ConfigurationError(f"num_scales must be in [1, {MAX_SCALES}]")
        if self.precision not in (32, 64):
            raise ConfigurationError(f"precision must be 32 or 64, got {self.precision}")

    def pack(self) -> bytes:
        return _HEADER.pack(MAGIC, self.version, self.config_hash, self.width, self.height, self.frame_count,
                            self.gop_size, self.lambda_index, self.precision, self.num_scales)

    @classmethod
    def unpack(cls, f: BinaryIO) -> "SequenceHeader":
        raw = f.read(_HEADER.size)
        if len(raw) < 4 or raw[:4] != MAGIC:
            raise FormatError("not a container (bad magic)")
        if len(raw) != _HEADER.size:
            raise TruncationError("container header truncated")
        _, ver, chash, w, h, n, gop, li, prec, ns = _HEADER.unpack(raw)
        if ver != VERSION:
            raise FormatError(f"unsupported container version {ver}")
        return cls(chash, w, h, n, gop, ns, li, prec, ver)


@dataclass
class Chunk:
    scale: int
    payload: bytes
    crc: int | None = None

    def __post_init__(self):
        if self.crc is None:
            self.crc = zlib.crc32(self.payload)

    @property
    def intact(self) -> bool:
        return zlib.crc32(self.payload) == self.crc


@dataclass
class FrameRecord:
    frame_type: int
    chunks: list[Chunk] = field(default_factory=list)

    @property
    def presence(self) -> int:
        bits = 0
        for c in self.chunks:
            bits |= 1 << c.scale
        return bits

    def chunk_for(self, scale: int) -> Chunk | None:
        for c in self.chunks:
            if c.scale == scale:
                return c
        return None

    def pack(self) -> bytes:
        scales = [c.scale for c in self.chunks]
        if scales != sorted(set(scales)):
            raise FormatError(f"chunks must be in strictly increasing scale order, got {scales}")
        out = [_RECORD.pack(self.frame_type, self.presence, len(self.chunks))]
        for c in self.chunks:
            out.append(_CHUNK.pack(c.scale, len(c.payload), c.crc))
            out.append(c.payload)
        return b"".join(out)

    @classmethod
    def unpack(cls, f: BinaryIO, num_scales: int) -> "FrameRecord":
        raw = f.read(_RECORD.size)
        if len(raw) != _RECORD.size:
            raise TruncationError("frame record header truncated")
        ftype, presence, count = _RECORD.unpack(raw)
        if ftype not in (INTRA, INTER):
            raise FormatError(f"unknown frame type {ftype}")
        chunks = []
        for _ in range(count):
            raw = f.read(_CHUNK.size)
            if len(raw) != _CHUNK.size:
                raise TruncationError("chunk header truncated")
            scale, length, crc = _CHUNK.unpack(raw)
            payload = f.read(length)
            if len(payload) != length:
                raise TruncationError(f"chunk payload truncated ({len(payload)} of {length} bytes)")
            if scale >= num_scales:
                raise FormatError(f"chunk scale {scale} >= num_scales {num_scales}")
            chunks.append(Chunk(scale, payload, crc))
        rec = cls(ftype, chunks)
        if rec.presence != presence or [c.scale for c in chunks] != sorted({c.scale for c in chunks}):
            raise FormatError("presence bitmap disagrees with the chunk list")
        return rec


@dataclass
class Container:
    header: SequenceHeader
    frames: list[FrameRecord]

    def pack(self) -> bytes:
        if len(self.frames) != self.header.frame_count:
            raise FormatError("frame_count disagrees with the number of records")
        return self.header.pack() + b"".join(r.pack() for r in self.frames)

    @classmethod
    def unpack(cls, data: bytes) -> "Container":
        f = io.BytesIO(data)
        header = SequenceHeader.unpack(f)
        frames = [FrameRecord.unpack(f, header.num_scales) for _ in range(header.frame_count)]
        if f.read(1):
            raise FormatError("trailing bytes after the last frame record")
        return cls(header, frames)


def truncate_container(data: bytes, k: int) -> bytes:
    """Keep only the first ``k`` chunks of every frame record."""
    if k < 0:
        raise ConfigurationError("k must be non-negative")
    c = Container.unpack(data)
    for r in c.frames:
        r.chunks = r.chunks[:k]
    return c.pack()


def drop_chunks(data: bytes, drop_pattern: dict[int, set[int]]) -> bytes:
    """Remove the listed (frame -> scales) chunks from a container."""
    c = Container.unpack(data)
    for t, scales in drop_pattern.items():
        if 0 <= t < len(c.frames):
            c.frames[t].chunks = [ch for ch in c.frames[t].chunks if ch.scale not in scales]
    return c.pack()
