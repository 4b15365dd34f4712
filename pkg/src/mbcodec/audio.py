"""16-bit mono WAV I/O and the binary external semantic-feature file."""

from __future__ import annotations

import struct
import wave
from pathlib import Path

import numpy as np

from .errors import CorruptStream, NotAStream

FEATURE_MAGIC = b"MBSF"
_FEATURE_HEADER = struct.Struct("<4sIH")


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a 16-bit PCM mono WAV as float64 samples in [-1, 1)."""
    with wave.open(str(path), "rb") as f:
        if f.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono audio, got {f.getnchannels()} channels")
        if f.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM, got {8 * f.getsampwidth()}-bit")
        sr = f.getframerate()
        raw = f.readframes(f.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0, sr


def to_pcm16(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    return np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")


def write_wav(path, samples, sample_rate: int) -> None:
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(int(sample_rate))
        f.writeframes(to_pcm16(samples).tobytes())


def write_features(path, features) -> None:
    """Write per-frame feature vectors as ``MBSF`` | u32 frames | u16 dim | f32 rows."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"features must be (frames, dim), got {x.shape}")
    data = _FEATURE_HEADER.pack(FEATURE_MAGIC, x.shape[0], x.shape[1]) + x.astype("<f4").tobytes()
    Path(path).write_bytes(data)


def read_features(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _FEATURE_HEADER.size or data[:4] != FEATURE_MAGIC:
        raise NotAStream(f"{path}: not an MBSF feature file")
    _, frames, dim = _FEATURE_HEADER.unpack_from(data)
    body = data[_FEATURE_HEADER.size :]
    if len(body) != 4 * frames * dim:
        raise CorruptStream(f"{path}: expected {frames}x{dim} floats")
    return np.frombuffer(body, dtype="<f4").reshape(frames, dim).astype(np.float64)
