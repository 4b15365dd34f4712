"""Fixed-width ``.mbc`` bitstream and bitrate accounting.

Layout (little-endian header, 19 bytes)::

    magic "MBC1" | version u8 | sample_rate u32 | frame_rate u16 |
    total_codebooks u8 | bits_per_code u8 | num_frames u32 |
    pqmf_bands u8 | flags u8

followed by ``num_frames * total_codebooks`` codes of ``bits_per_code`` bits,
frame-major, the semantic code first in each frame, MSB-first within a
field, the final byte zero-padded.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CodeOutOfRange, CorruptStream, DepthMismatch, NotAStream

MAGIC = b"MBC1"
VERSION = 1
SOURCE_BIT_DEPTH = 16
_HEADER = struct.Struct("<4sBIHBBIBB")
HEADER_SIZE = _HEADER.size


def bits_for(codebook_size: int) -> int:
    return max(1, math.ceil(math.log2(codebook_size)))


@dataclass(frozen=True)
class StreamHeader:
    sample_rate: int
    frame_rate: int
    total_codebooks: int
    bits_per_code: int
    num_frames: int
    pqmf_bands: int
    flags: int = 0
    version: int = VERSION

    def to_bytes(self) -> bytes:
        return _HEADER.pack(
            MAGIC,
            self.version,
            self.sample_rate,
            self.frame_rate,
            self.total_codebooks,
            self.bits_per_code,
            self.num_frames,
            self.pqmf_bands,
            self.flags,
        )

    @property
    def payload_bits(self) -> int:
        return self.num_frames * self.total_codebooks * self.bits_per_code

    @property
    def payload_bytes(self) -> int:
        return (self.payload_bits + 7) // 8


@dataclass(frozen=True)
class CodeFrame:
    semantic_code: int
    acoustic_codes: tuple[int, ...]

    @property
    def depth(self) -> int:
        return len(self.acoustic_codes)


def bitrate_bps(header: StreamHeader) -> int:
    return header.total_codebooks * header.bits_per_code * header.frame_rate


def compression_ratio(header: StreamHeader) -> float:
    """Ratio of 16-bit mono PCM bitrate to the coded bitrate."""
    return header.sample_rate * SOURCE_BIT_DEPTH / bitrate_bps(header)


def frames_to_codes(frames: Sequence[CodeFrame], total_codebooks: int) -> np.ndarray:
    codes = np.zeros((len(frames), total_codebooks), dtype=np.int64)
    for i, f in enumerate(frames):
        if f.depth != total_codebooks - 1:
            raise DepthMismatch(f"frame {i} has {f.depth} acoustic codes, stream needs {total_codebooks - 1}")
        codes[i, 0] = f.semantic_code
        codes[i, 1:] = f.acoustic_codes
    return codes


def codes_to_frames(codes: np.ndarray) -> list[CodeFrame]:
    return [CodeFrame(int(row[0]), tuple(int(c) for c in row[1:])) for row in codes]


def pack_codes(header: StreamHeader, codes) -> bytes:
    """Serialize an ``(num_frames, total_codebooks)`` code array."""
    c = np.asarray(codes, dtype=np.int64)
    if c.size == 0:
        c = c.reshape(0, header.total_codebooks)
    if c.ndim != 2 or c.shape[1] != header.total_codebooks:
        raise DepthMismatch(f"expected {header.total_codebooks} codes per frame, got shape {c.shape}")
    if c.shape[0] != header.num_frames:
        raise DepthMismatch(f"header says {header.num_frames} frames, got {c.shape[0]}")
    b = header.bits_per_code
    if c.size and (c.min() < 0 or c.max() >= 1 << b):
        raise CodeOutOfRange(f"codes must lie in [0, {1 << b})")
    shifts = np.arange(b - 1, -1, -1, dtype=np.int64)
    bits = ((c.reshape(-1, 1) >> shifts) & 1).astype(np.uint8).ravel()
    return header.to_bytes() + np.packbits(bits).tobytes()


def unpack_codes(data: bytes) -> tuple[StreamHeader, np.ndarray]:
    if len(data) < HEADER_SIZE:
        if data[:4] != MAGIC[: len(data[:4])]:
            raise NotAStream("bad magic")
        raise CorruptStream("truncated header")
    magic, version, sr, fr, n, b, frames, m, flags = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise NotAStream(f"bad magic {magic!r}")
    if version != VERSION:
        raise NotAStream(f"unsupported version {version}")
    header = StreamHeader(sr, fr, n, b, frames, m, flags, version)
    payload = np.frombuffer(data, dtype=np.uint8, offset=HEADER_SIZE)
    if payload.size != header.payload_bytes:
        raise CorruptStream(f"payload is {payload.size} bytes, expected {header.payload_bytes}")
    bits = np.unpackbits(payload)[: header.payload_bits].astype(np.int64)
    weights = 1 << np.arange(b - 1, -1, -1, dtype=np.int64)
    codes = (bits.reshape(-1, b) @ weights).reshape(frames, n)
    return header, codes


def pack(header: StreamHeader, frames: Sequence[CodeFrame]) -> bytes:
    return pack_codes(header, frames_to_codes(frames, header.total_codebooks))


def unpack(data: bytes) -> tuple[StreamHeader, list[CodeFrame]]:
    header, codes = unpack_codes(data)
    return header, codes_to_frames(codes)


@dataclass(frozen=True, eq=False)
class PackedStream:
    header: StreamHeader
    codes: np.ndarray  # (num_frames, total_codebooks)

    def to_bytes(self) -> bytes:
        return pack_codes(self.header, self.codes)

    @classmethod
    def from_bytes(cls, data: bytes) -> "PackedStream":
        return cls(*unpack_codes(data))

    @property
    def frames(self) -> list[CodeFrame]:
        return codes_to_frames(self.codes)

    def __eq__(self, other):
        if not isinstance(other, PackedStream):
            return NotImplemented
        return self.header == other.header and np.array_equal(self.codes, other.codes)
