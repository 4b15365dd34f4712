"""Seeded synthetic audio: tone mixtures and band-pass noise.

Signals are drawn inside a config's retained frequency regions by default,
so the quantizer-free latent path reproduces them closely.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import butter, sosfilt

# fraction of each retained region used for tone frequencies; the DCT edge
# leaks, so the last quarter is avoided
_INNER = (0.1, 0.75)


def _pick_frequency(regions, rng: np.random.Generator) -> float:
    lo, hi = regions[rng.integers(len(regions))]
    width = hi - lo
    return float(rng.uniform(lo + _INNER[0] * width, lo + _INNER[1] * width))


def envelope(n: int, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    """Slow random amplitude envelope in [0.2, 1]."""
    points = max(2, int(n / sample_rate * 4) + 2)
    knots = rng.uniform(0.2, 1.0, size=points)
    return np.interp(np.linspace(0, points - 1, n), np.arange(points), knots)


def tone_mixture(seconds: float, sample_rate: int, regions, rng: np.random.Generator,
                 num_tones: int = 4, peak: float = 0.5) -> np.ndarray:
    n = int(round(seconds * sample_rate))
    t = np.arange(n) / sample_rate
    x = np.zeros(n)
    for _ in range(num_tones):
        f = _pick_frequency(regions, rng)
        x += envelope(n, sample_rate, rng) * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return peak * x / np.max(np.abs(x))


def bandpass_noise(seconds: float, sample_rate: int, band: tuple[float, float],
                   rng: np.random.Generator, level: float = 0.1) -> np.ndarray:
    n = int(round(seconds * sample_rate))
    nyq = sample_rate / 2.0
    lo, hi = max(band[0], 20.0), min(band[1], nyq - 20.0)
    sos = butter(4, [lo / nyq, hi / nyq], btype="bandpass", output="sos")
    y = sosfilt(sos, rng.standard_normal(n))
    return level * y / np.max(np.abs(y))


def corpus_item(seconds: float, sample_rate: int, regions, rng: np.random.Generator) -> np.ndarray:
    """A tone mixture plus noise in one randomly chosen retained region."""
    x = tone_mixture(seconds, sample_rate, regions, rng, num_tones=int(rng.integers(3, 7)))
    lo, hi = regions[rng.integers(len(regions))]
    width = hi - lo
    x += bandpass_noise(seconds, sample_rate, (lo + 0.1 * width, lo + 0.75 * width), rng)
    return x


def synthetic_corpus(num_items: int, seconds: float, sample_rate: int, regions, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [corpus_item(seconds, sample_rate, regions, rng) for _ in range(num_items)]
