"""Pseudo-QMF filter bank: prototype design, cosine modulation, analysis/synthesis.

The prototype is a Kaiser-windowed sinc whose cutoff is tuned by golden-section
search so that analysis followed by synthesis reproduces a delayed impulse as
closely as possible. Band filters are cosine-modulated copies of the prototype
with the alternating +-pi/4 phase, and synthesis filters are the time-reversed
analysis filters scaled by the band count.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import kaiser_beta, upfirdn
from scipy.signal.windows import kaiser

from .errors import BandMismatch, EmptyInput, InsufficientTaps, InvalidBandCount

#: roundtrip error above this means the tap budget is too small for M bands
MAX_ACCEPTABLE_ERROR_DB = -40.0
DEFAULT_TAPS = 481
DEFAULT_ATTENUATION_DB = 100.0

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class PrototypeFilter:
    taps: np.ndarray
    num_bands: int
    cutoff: float
    beta: float
    roundtrip_error_db: float

    @property
    def num_taps(self) -> int:
        return len(self.taps)


@dataclass(frozen=True)
class PqmfBank:
    prototype: PrototypeFilter
    analysis_filters: np.ndarray
    synthesis_filters: np.ndarray

    @property
    def num_bands(self) -> int:
        return self.prototype.num_bands

    @property
    def decimation(self) -> int:
        return self.prototype.num_bands

    @property
    def num_taps(self) -> int:
        return self.prototype.num_taps

    @property
    def group_delay(self) -> int:
        return self.prototype.num_taps - 1


@dataclass(frozen=True)
class SubbandSignal:
    bands: np.ndarray  # (M, band_length)
    source_length: int

    @property
    def num_bands(self) -> int:
        return self.bands.shape[0]


def phase_term(k: int) -> float:
    """Modulation phase of band ``k``: +pi/4 for even bands, -pi/4 for odd."""
    return (-1) ** k * math.pi / 4.0


def kaiser_lowpass(num_taps: int, cutoff: float, beta: float) -> np.ndarray:
    """Linear-phase windowed-sinc lowpass with unity DC gain.

    ``cutoff`` is in cycles per sample (0.5 is Nyquist).
    """
    n = np.arange(num_taps) - (num_taps - 1) / 2.0
    h = 2.0 * cutoff * np.sinc(2.0 * cutoff * n) * kaiser(num_taps, beta)
    # enforce exact symmetry against rounding in the window/sinc evaluation
    return 0.5 * (h + h[::-1])


def modulate(taps: np.ndarray, num_bands: int) -> np.ndarray:
    """Cosine-modulated analysis filters, one row per band."""
    n = np.arange(len(taps))
    rows = [
        2.0 * taps * np.cos(math.pi / num_bands * (k + 0.5) * n + phase_term(k))
        for k in range(num_bands)
    ]
    return np.array(rows)


def _bank_from_taps(prototype: PrototypeFilter) -> PqmfBank:
    analysis = modulate(prototype.taps, prototype.num_bands)
    synthesis = analysis[:, ::-1] * prototype.num_bands
    analysis.setflags(write=False)
    synthesis = np.ascontiguousarray(synthesis)
    synthesis.setflags(write=False)
    return PqmfBank(prototype, analysis, synthesis)


def _impulse_error(taps: np.ndarray, num_bands: int) -> float:
    """Mean residual energy of impulse roundtrips, one impulse per polyphase offset."""
    proto = PrototypeFilter(taps, num_bands, 0.0, 0.0, 0.0)
    bank = _bank_from_taps(proto)
    L = len(taps)
    total = 0.0
    for offset in range(num_bands):
        x = np.zeros(2 * L + num_bands)
        x[L + offset] = 1.0
        y = reconstruct(bank, analyze(bank, x))
        total += float(np.sum((y - x) ** 2))
    return total / num_bands


def _golden_section(fn, lo: float, hi: float, iterations: int = 48) -> float:
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iterations):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


@functools.lru_cache(maxsize=32)
def design_prototype(
    num_bands: int,
    num_taps: int = DEFAULT_TAPS,
    target_attenuation_db: float = DEFAULT_ATTENUATION_DB,
) -> PrototypeFilter:
    """Design the prototype lowpass for an M-band PQMF bank.

    The Kaiser beta follows from ``target_attenuation_db``. The cutoff is
    searched over ``[0.5, 1.5] / (4 M)`` cycles/sample to minimise the
    delay-compensated impulse roundtrip error of the resulting bank.

    Raises:
        InvalidBandCount: if ``num_bands < 2``.
        InsufficientTaps: if ``num_taps < 8 * num_bands`` or the best design
            still misses -40 dB roundtrip error.
    """
    if num_bands < 2:
        raise InvalidBandCount(f"need at least 2 bands, got {num_bands}")
    if num_taps < 8 * num_bands:
        raise InsufficientTaps(f"{num_taps} taps < 8*M = {8 * num_bands}")
    beta = float(kaiser_beta(target_attenuation_db))

    def objective(cutoff: float) -> float:
        return _impulse_error(kaiser_lowpass(num_taps, cutoff, beta), num_bands)

    base = 1.0 / (4.0 * num_bands)
    cutoff = _golden_section(objective, 0.5 * base, 1.5 * base)
    taps = kaiser_lowpass(num_taps, cutoff, beta)
    err = objective(cutoff)
    err_db = 10.0 * math.log10(err) if err > 0 else -math.inf
    if err_db > MAX_ACCEPTABLE_ERROR_DB:
        raise InsufficientTaps(
            f"best roundtrip error {err_db:.1f} dB with {num_taps} taps for M={num_bands}"
        )
    taps.setflags(write=False)
    return PrototypeFilter(taps, num_bands, cutoff, beta, err_db)


def build_bank(prototype: PrototypeFilter) -> PqmfBank:
    return _bank_from_taps(prototype)


@functools.lru_cache(maxsize=32)
def default_bank(num_bands: int, num_taps: int = DEFAULT_TAPS) -> PqmfBank:
    return build_bank(design_prototype(num_bands, num_taps))


def analyze(bank: PqmfBank, signal) -> SubbandSignal:
    """Split ``signal`` into M critically decimated subbands.

    The input is zero-padded to a multiple of M; each band is the full
    convolution with its analysis filter, keeping every M-th sample.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise EmptyInput("analyze needs a non-empty 1-D signal")
    M = bank.num_bands
    pad = (-x.size) % M
    if pad:
        x = np.concatenate([x, np.zeros(pad)])
    bands = np.stack([upfirdn(h, x, up=1, down=M) for h in bank.analysis_filters])
    return SubbandSignal(bands, int(np.asarray(signal).size))


def synthesize(bank: PqmfBank, subbands) -> np.ndarray:
    """Upsample, filter and sum the subbands.

    Returns ``M * band_length + L - 1`` samples; the input is delayed by
    ``bank.group_delay``.
    """
    bands = subbands.bands if isinstance(subbands, SubbandSignal) else np.asarray(subbands)
    M = bank.num_bands
    if bands.ndim != 2 or bands.shape[0] != M:
        raise BandMismatch(f"expected {M} bands, got shape {bands.shape}")
    n_out = M * bands.shape[1] + bank.num_taps - 1
    out = np.zeros(n_out)
    if bands.shape[1] == 0:
        return out
    for f, band in zip(bank.synthesis_filters, bands):
        y = upfirdn(f, band, up=M, down=1)
        out[: y.size] += y
    return out


def reconstruct(bank: PqmfBank, subbands: SubbandSignal, length: int | None = None) -> np.ndarray:
    """Synthesize and remove the group delay, returning ``length`` samples."""
    if length is None:
        length = subbands.source_length
    y = synthesize(bank, subbands)
    d = bank.group_delay
    out = y[d : d + length]
    if out.size < length:
        out = np.concatenate([out, np.zeros(length - out.size)])
    return out


def roundtrip_error_db(bank: PqmfBank, signal, margin: int | None = None) -> float:
    """Residual energy of analyze/synthesize relative to input energy, in dB.

    ``margin`` samples at each end are excluded (defaults to 0).
    """
    x = np.asarray(signal, dtype=np.float64)
    y = reconstruct(bank, analyze(bank, x))
    if margin:
        x, y = x[margin:-margin], y[margin:-margin]
    err = float(np.sum((y - x) ** 2))
    ref = float(np.sum(x**2))
    if err == 0.0:
        return -math.inf
    return 10.0 * math.log10(err / ref)


def impulse_roundtrip_error_db(bank: PqmfBank) -> float:
    """Impulse roundtrip error averaged over the M polyphase offsets."""
    return 10.0 * math.log10(_impulse_error(np.asarray(bank.prototype.taps), bank.num_bands))


def product_filter(prototype: PrototypeFilter) -> np.ndarray:
    """``h * reverse(h)``: the zero-phase product whose spectral factor is ``h``."""
    h = np.asarray(prototype.taps)
    return np.convolve(h, h[::-1])


def nyquist_tap_ratio(prototype: PrototypeFilter) -> float:
    """Second-largest over largest tap magnitude of the product filter after
    2M-fold downsampling aligned on its centre tap.

    A 2M-band (Nyquist) product filter has a single non-zero tap there.
    """
    F = product_filter(prototype)
    step = 2 * prototype.num_bands
    centre = prototype.num_taps - 1
    mags = np.sort(np.abs(F[centre % step :: step]))[::-1]
    return float(mags[1] / mags[0])


def save_filter(prototype: PrototypeFilter, path) -> None:
    """Write taps as text: header ``M=<int> L=<int>`` then one tap per line."""
    lines = [f"M={prototype.num_bands} L={prototype.num_taps}"]
    lines += [f"{t:.17g}" for t in prototype.taps]
    Path(path).write_text("\n".join(lines) + "\n")


def load_filter(path) -> PrototypeFilter:
    text = Path(path).read_text().split("\n")
    fields = dict(item.split("=") for item in text[0].split())
    M, L = int(fields["M"]), int(fields["L"])
    taps = np.array([float(v) for v in text[1 : 1 + L]])
    if taps.size != L:
        raise ValueError(f"filter file declares {L} taps, found {taps.size}")
    taps.setflags(write=False)
    err = 10.0 * math.log10(_impulse_error(taps, M))
    return PrototypeFilter(taps, M, float("nan"), float("nan"), err)
