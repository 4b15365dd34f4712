"""STFT, mel features and objective fidelity metrics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from .errors import TooShort, UndefinedReference

LOG_FLOOR = 1e-5
SI_SDR_CAP_DB = 100.0
DISTANCE_WINDOW = 1024
DISTANCE_HOP = 256
DISTANCE_MELS = 80


@dataclass(frozen=True)
class Spectrogram:
    values: np.ndarray  # (frames, bins) complex
    window_size: int
    hop: int
    sample_rate: int

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)


@dataclass(frozen=True)
class MelSpectrogram:
    values: np.ndarray  # (frames, n_mels)
    n_mels: int
    f_min: float
    f_max: float


@dataclass(frozen=True)
class MetricsReport:
    si_sdr_db: float
    stft_distance: float
    mel_distance: float

    def to_text(self) -> str:
        return "\n".join(f"{k}={v!r}" for k, v in asdict(self).items())

    def to_record(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_text(cls, text: str) -> "MetricsReport":
        fields = dict(line.split("=", 1) for line in text.strip().splitlines())
        return cls(**{k: float(v) for k, v in fields.items()})


def _frames(x: np.ndarray, window_size: int, hop: int) -> np.ndarray:
    if x.size < window_size:
        raise TooShort(f"signal of {x.size} samples is shorter than window {window_size}")
    return sliding_window_view(x, window_size)[::hop]


def stft(signal, window_size: int = DISTANCE_WINDOW, hop: int = DISTANCE_HOP, sample_rate: int = 24000) -> Spectrogram:
    """Hann-windowed one-sided STFT without edge padding."""
    if window_size <= 0 or window_size & (window_size - 1):
        raise ValueError(f"window_size must be a power of two, got {window_size}")
    if not 0 < hop <= window_size:
        raise ValueError(f"hop must be in (0, window_size], got {hop}")
    x = np.asarray(signal, dtype=np.float64)
    frames = _frames(x, window_size, hop) * get_window("hann", window_size)
    return Spectrogram(np.fft.rfft(frames, axis=-1), window_size, hop, sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_mels: int, n_fft: int, sample_rate: int, f_min: float = 0.0, f_max: float | None = None
) -> np.ndarray:
    """Triangular filters on the HTK mel scale, shape ``(n_mels, n_fft // 2 + 1)``.

    Each triangle is widened to at least one FFT bin so no row is empty at
    coarse frequency resolution.
    """
    if f_max is None:
        f_max = sample_rate / 2.0
    if f_max > sample_rate / 2.0 + 1e-9:
        raise ValueError("f_max exceeds Nyquist")
    bin_hz = sample_rate / n_fft
    freqs = np.arange(n_fft // 2 + 1) * bin_hz
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    lower, centre, upper = edges[:-2], edges[1:-1], edges[2:]
    up = (freqs[None, :] - lower[:, None]) / np.maximum(centre - lower, bin_hz)[:, None]
    down = (upper[:, None] - freqs[None, :]) / np.maximum(upper - centre, bin_hz)[:, None]
    return np.maximum(0.0, np.minimum(up, down))


def mel_spectrogram(
    signal,
    n_mels: int = DISTANCE_MELS,
    window_size: int = DISTANCE_WINDOW,
    hop: int = DISTANCE_HOP,
    sample_rate: int = 24000,
    f_min: float = 0.0,
    f_max: float | None = None,
) -> MelSpectrogram:
    if n_mels < 8:
        raise ValueError("n_mels must be at least 8")
    spec = stft(signal, window_size, hop, sample_rate)
    fb = mel_filterbank(n_mels, window_size, sample_rate, f_min, f_max)
    f_max = sample_rate / 2.0 if f_max is None else f_max
    return MelSpectrogram(spec.magnitude @ fb.T, n_mels, f_min, f_max)


def si_sdr(reference, estimate) -> float:
    """Scale-invariant SDR in dB, clipped to +-100 dB."""
    ref = np.asarray(reference, dtype=np.float64)
    est = np.asarray(estimate, dtype=np.float64)
    if ref.shape != est.shape or ref.size == 0:
        raise ValueError(f"shape mismatch {ref.shape} vs {est.shape}")
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0.0:
        raise UndefinedReference("reference is all zeros")
    target = (np.dot(est, ref) / ref_energy) * ref
    noise = est - target
    t, n = float(np.dot(target, target)), float(np.dot(noise, noise))
    if t == 0.0:
        return -SI_SDR_CAP_DB
    if n == 0.0:
        return SI_SDR_CAP_DB
    return float(np.clip(10.0 * math.log10(t / n), -SI_SDR_CAP_DB, SI_SDR_CAP_DB))


def _log_l1(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(np.abs(np.log(LOG_FLOOR + a) - np.log(LOG_FLOOR + b))))


def stft_distance(reference, estimate, window_size: int = DISTANCE_WINDOW, hop: int = DISTANCE_HOP) -> float:
    """Mean absolute difference of log-magnitude spectrograms."""
    ref, est = np.asarray(reference), np.asarray(estimate)
    if ref.shape != est.shape:
        raise ValueError(f"length mismatch {ref.shape} vs {est.shape}")
    return _log_l1(stft(ref, window_size, hop).magnitude, stft(est, window_size, hop).magnitude)


def mel_distance(
    reference,
    estimate,
    sample_rate: int = 24000,
    n_mels: int = DISTANCE_MELS,
    window_size: int = DISTANCE_WINDOW,
    hop: int = DISTANCE_HOP,
) -> float:
    """Mean absolute difference of log-mel spectrograms."""
    ref, est = np.asarray(reference), np.asarray(estimate)
    if ref.shape != est.shape:
        raise ValueError(f"length mismatch {ref.shape} vs {est.shape}")
    m_ref = mel_spectrogram(ref, n_mels, window_size, hop, sample_rate).values
    m_est = mel_spectrogram(est, n_mels, window_size, hop, sample_rate).values
    return _log_l1(m_ref, m_est)


def metrics(reference, estimate, sample_rate: int = 24000) -> MetricsReport:
    return MetricsReport(
        si_sdr(reference, estimate),
        stft_distance(reference, estimate),
        mel_distance(reference, estimate, sample_rate),
    )
