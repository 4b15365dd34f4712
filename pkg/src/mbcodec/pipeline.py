"""Desk-scale codec: PQMF + per-band DCT latents, semantic VQ and acoustic RVQ.

Each codec frame covers ``hop = sample_rate / frame_rate`` samples. The
PQMF splits the signal into ``M`` bands; each band contributes ``hop / M``
samples per frame, of which the first ``subband_coeffs`` orthonormal DCT-II
coefficients are kept. Stacking bands gives the acoustic latent ``z`` of
dimension ``M * subband_coeffs`` that the residual stack quantizes. A
parallel semantic vector ``s`` (mel-cepstral features, or externally
supplied ones) goes through a single VQ.

Acoustic layer ``k`` (0-based) is tied to band ``k mod M``: it is trained
only on that band's slice of the residual, so each codebook refines one
frequency range.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dct, idct
from scipy.signal import get_window

from . import audio, pqmf
from .bitstream import PackedStream, StreamHeader, bits_for
from .depth_sampler import DepthDistribution, DropoutSchedule, schedule_depth
from .errors import (
    CodecError,
    ConfigMismatch,
    CorruptStream,
    DimMismatch,
    InsufficientData,
    ModelNotReady,
    NotAStream,
    RateMismatch,
)
from .losses import (
    LossBreakdown,
    ProjectionPair,
    acoustic_loss,
    reconstruction_loss,
    semantic_loss,
    total_loss,
    vq_commit_loss,
)
from .quantizer import (
    Codebook,
    RvqStack,
    codebook_from_bytes,
    codebook_to_bytes,
    rvq_decode,
    rvq_encode_batch,
    stack_from_bytes,
    stack_to_bytes,
    train_codebooks,
    vq_encode_batch,
)
from .spectral import LOG_FLOOR, MetricsReport, mel_filterbank, metrics

log = logging.getLogger(__name__)

MODEL_MAGIC = b"MBCM"
MODEL_VERSION = 1
_CONFIG = struct.Struct("<IHBHBHHHHHB")
_PROTOTYPE = struct.Struct("<ddd")

SUBBAND_STFT_WINDOW = 64
SUBBAND_STFT_HOP = 32
MIN_FRAMES_PER_ENTRY = 10


@dataclass(frozen=True)
class CodecConfig:
    sample_rate: int = 24000
    frame_rate: int = 25
    total_codebooks: int = 8
    codebook_size: int = 2048
    pqmf_bands: int = 8
    subband_coeffs: int = 16
    semantic_dim: int = 13
    pqmf_taps: int = pqmf.DEFAULT_TAPS
    semantic_mels: int = 26
    common_dim: int = 16
    reserve_zero: bool = True

    def __post_init__(self):
        if self.total_codebooks < 2:
            raise ValueError("need at least one semantic and one acoustic codebook")
        if self.codebook_size < 2:
            raise ValueError("codebook_size must be at least 2")
        if self.sample_rate % (self.frame_rate * self.pqmf_bands):
            raise ValueError(
                f"sample_rate {self.sample_rate} not divisible by frame_rate*M = "
                f"{self.frame_rate * self.pqmf_bands}"
            )
        if self.band_frame < self.subband_coeffs:
            raise ValueError(f"{self.band_frame} band samples per frame < {self.subband_coeffs} coefficients")
        if not 1 <= self.semantic_dim <= self.semantic_mels:
            raise ValueError("semantic_dim must be in [1, semantic_mels]")

    @property
    def hop(self) -> int:
        return self.sample_rate // self.frame_rate

    @property
    def band_frame(self) -> int:
        return self.hop // self.pqmf_bands

    @property
    def code_dim(self) -> int:
        return self.pqmf_bands * self.subband_coeffs

    @property
    def acoustic_layers(self) -> int:
        return self.total_codebooks - 1

    @property
    def bits_per_code(self) -> int:
        return bits_for(self.codebook_size)

    @property
    def band_feature_dim(self) -> int:
        n = max(self.band_frame, SUBBAND_STFT_WINDOW)
        frames = (n - SUBBAND_STFT_WINDOW) // SUBBAND_STFT_HOP + 1
        return frames * (SUBBAND_STFT_WINDOW // 2 + 1)

    def band_for_layer(self, layer: int) -> int:
        """0-based subband supervising 0-based acoustic layer ``layer``."""
        return layer % self.pqmf_bands

    def header(self, num_frames: int) -> StreamHeader:
        return StreamHeader(
            self.sample_rate,
            self.frame_rate,
            self.total_codebooks,
            self.bits_per_code,
            num_frames,
            self.pqmf_bands,
        )

    def retained_regions(self) -> list[tuple[float, float]]:
        """Frequency intervals (Hz) that survive the per-band DCT truncation.

        Odd PQMF bands are spectrally inverted after decimation, so they keep
        the top of their range instead of the bottom.
        """
        width = self.sample_rate / (2 * self.pqmf_bands)
        kept = self.subband_coeffs * width / self.band_frame
        regions = []
        for k in range(self.pqmf_bands):
            if k % 2 == 0:
                regions.append((k * width, k * width + kept))
            else:
                regions.append(((k + 1) * width - kept, (k + 1) * width))
        return regions


def supervision_masks(config: CodecConfig) -> list[np.ndarray]:
    """Indicator of each acoustic layer's subband block within ``z``."""
    masks = []
    c = config.subband_coeffs
    for layer in range(config.acoustic_layers):
        b = config.band_for_layer(layer)
        m = np.zeros(config.code_dim)
        m[b * c : (b + 1) * c] = 1.0
        masks.append(m)
    return masks


@dataclass(eq=False)
class CodecModel:
    config: CodecConfig
    bank: pqmf.PqmfBank
    semantic_vq: Codebook | None = None
    acoustic_rvq: RvqStack | None = None
    training_log: list[dict] = field(default_factory=list, repr=False)

    def __post_init__(self):
        cfg = self.config
        if self.bank.num_bands != cfg.pqmf_bands:
            raise ConfigMismatch("PQMF bank band count differs from config")
        if self.semantic_vq is not None and self.semantic_vq.dim != cfg.semantic_dim:
            raise ConfigMismatch("semantic codebook dimension differs from config")
        if self.acoustic_rvq is not None:
            if len(self.acoustic_rvq) != cfg.acoustic_layers or self.acoustic_rvq.dim != cfg.code_dim:
                raise ConfigMismatch("acoustic stack shape differs from config")
        d = cfg.band_feature_dim
        common = min(cfg.common_dim, d)
        self.projections = [ProjectionPair.dct(d, d, common) for _ in range(cfg.acoustic_layers)]

    @classmethod
    def untrained(cls, config: CodecConfig) -> "CodecModel":
        return cls(config, pqmf.default_bank(config.pqmf_bands, config.pqmf_taps))

    @property
    def ready(self) -> bool:
        return self.semantic_vq is not None and self.acoustic_rvq is not None


@dataclass(frozen=True)
class LatentFrame:
    z: np.ndarray
    s: np.ndarray


@dataclass(frozen=True, eq=False)
class Latents:
    z: np.ndarray  # (T, M * c), band-major
    s: np.ndarray  # (T, semantic_dim)
    band_frames: np.ndarray  # (M, T, hop / M) subband samples per frame

    def __len__(self) -> int:
        return self.z.shape[0]

    def __getitem__(self, t: int) -> LatentFrame:
        return LatentFrame(self.z[t], self.s[t])


# --------------------------------------------------------------------------
# feature extraction
# --------------------------------------------------------------------------


def _as_signal(signal) -> np.ndarray:
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected mono 1-D audio, got shape {x.shape}")
    return x


def semantic_features(config: CodecConfig, signal) -> np.ndarray:
    """Mel-cepstral vectors, one per frame; silence maps to the zero vector."""
    x = _as_signal(signal)
    hop = config.hop
    T = x.size // hop
    frames = x[: T * hop].reshape(T, hop) * get_window("hann", hop)
    fb = mel_filterbank(config.semantic_mels, hop, config.sample_rate)
    mel = np.abs(np.fft.rfft(frames, axis=1)) @ fb.T
    logmel = np.log1p(mel / LOG_FLOOR)
    return dct(logmel, type=2, norm="ortho", axis=1)[:, : config.semantic_dim]


def extract_latents(model: CodecModel, signal, sample_rate: int | None = None, semantic=None) -> Latents:
    """Frame the signal and build the acoustic and semantic latents.

    ``semantic`` optionally replaces the built-in features with externally
    computed per-frame vectors (``(T, semantic_dim)``).
    """
    cfg = model.config
    if sample_rate is not None and sample_rate != cfg.sample_rate:
        raise RateMismatch(f"audio at {sample_rate} Hz, model expects {cfg.sample_rate} Hz")
    x = _as_signal(signal)
    T = x.size // cfg.hop
    n, c, M = cfg.band_frame, cfg.subband_coeffs, cfg.pqmf_bands
    if T == 0:
        empty = np.zeros((0, cfg.code_dim))
        return Latents(empty, np.zeros((0, cfg.semantic_dim)), np.zeros((M, 0, n)))
    bands = pqmf.analyze(model.bank, x).bands[:, : T * n].reshape(M, T, n)
    coeffs = dct(bands, type=2, norm="ortho", axis=2)[:, :, :c]
    z = coeffs.transpose(1, 0, 2).reshape(T, M * c)
    if semantic is None:
        s = semantic_features(cfg, x)
    else:
        s = np.asarray(semantic, dtype=np.float64)
        if s.shape != (T, cfg.semantic_dim):
            raise DimMismatch(f"semantic features {s.shape} do not match ({T}, {cfg.semantic_dim})")
    return Latents(z, s, bands)


def latents_to_band_frames(config: CodecConfig, z: np.ndarray) -> np.ndarray:
    """Zero-pad the truncated DCT blocks and invert them, ``(M, T, hop / M)``."""
    T = z.shape[0]
    M, c, n = config.pqmf_bands, config.subband_coeffs, config.band_frame
    coeffs = np.zeros((M, T, n))
    coeffs[:, :, :c] = z.reshape(T, M, c).transpose(1, 0, 2)
    return idct(coeffs, type=2, norm="ortho", axis=2)


def synthesize_latents(model: CodecModel, z) -> np.ndarray:
    """Waveform for a latent sequence; ``T * hop`` samples."""
    cfg = model.config
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    T = z.shape[0]
    if T == 0:
        return np.zeros(0)
    bands = latents_to_band_frames(cfg, z).reshape(cfg.pqmf_bands, T * cfg.band_frame)
    sub = pqmf.SubbandSignal(bands, T * cfg.hop)
    return pqmf.reconstruct(model.bank, sub)


def band_features(frames: np.ndarray) -> np.ndarray:
    """Log-magnitude short-time spectra of per-frame subband samples.

    ``frames`` is ``(T, n)``; frames shorter than the 64-sample window are
    zero-padded. Returns ``(T, n_windows * 33)`` of ``log(1 + |X|)`` so
    silence maps to zero.
    """
    T, n = frames.shape
    if n < SUBBAND_STFT_WINDOW:
        frames = np.concatenate([frames, np.zeros((T, SUBBAND_STFT_WINDOW - n))], axis=1)
    win = sliding_window_view(frames, SUBBAND_STFT_WINDOW, axis=1)[:, ::SUBBAND_STFT_HOP]
    spec = np.abs(np.fft.rfft(win * get_window("hann", SUBBAND_STFT_WINDOW), axis=-1))
    return np.log1p(spec).reshape(T, -1)


def subband_targets(latents: Latents) -> np.ndarray:
    """Features of every PQMF subband, ``(M, T, D_band)``."""
    return np.stack([band_features(b) for b in latents.band_frames])


def layer_features(config: CodecConfig, quantized: np.ndarray) -> np.ndarray:
    """One layer's quantized output rendered as subband spectral features.

    The layer's coefficient blocks are inverted to subband samples and
    passed through :func:`band_features`; the per-band results are summed.
    """
    frames = latents_to_band_frames(config, quantized)
    return sum(band_features(b) for b in frames)


# --------------------------------------------------------------------------
# encode / decode
# --------------------------------------------------------------------------


def _require_ready(model: CodecModel) -> None:
    if not model.ready:
        raise ModelNotReady("model has untrained codebooks")


def quantize(model: CodecModel, latents: Latents, depth: int | None = None) -> np.ndarray:
    """Full-width ``(T, N)`` code array; layers past ``depth`` get the zero code."""
    _require_ready(model)
    cfg = model.config
    depth = cfg.acoustic_layers if depth is None else depth
    codes = np.zeros((len(latents), cfg.total_codebooks), dtype=np.int64)
    if len(latents) == 0:
        return codes
    codes[:, 0], _ = vq_encode_batch(model.semantic_vq, latents.s)
    codes[:, 1 : depth + 1], _ = rvq_encode_batch(model.acoustic_rvq, latents.z, depth)
    return codes


def encode(model: CodecModel, signal, depth: int | None = None, sample_rate: int | None = None,
           semantic=None) -> PackedStream:
    _require_ready(model)
    latents = extract_latents(model, signal, sample_rate, semantic)
    codes = quantize(model, latents, depth)
    return PackedStream(model.config.header(len(latents)), codes)


def check_header(config: CodecConfig, header: StreamHeader) -> None:
    expected = config.header(header.num_frames)
    if header != expected:
        raise ConfigMismatch(f"stream header {header} does not match model config {expected}")


def decode(model: CodecModel, stream: PackedStream | bytes) -> np.ndarray:
    """Reconstruct audio from acoustic codes; semantic codes are not used."""
    _require_ready(model)
    if isinstance(stream, (bytes, bytearray)):
        stream = PackedStream.from_bytes(bytes(stream))
    check_header(model.config, stream.header)
    z = rvq_decode(model.acoustic_rvq, stream.codes[:, 1:])
    return synthesize_latents(model, z)


# --------------------------------------------------------------------------
# diagnostics and training
# --------------------------------------------------------------------------


def loss_breakdown(model: CodecModel, signal, depth: int, latents: Latents | None = None) -> tuple[LossBreakdown, dict]:
    """Every objective term for one signal quantized at ``depth`` layers.

    Returns the breakdown and the raw cosines (``semantic_cos``,
    ``acoustic_cos``). Frames whose semantic target or code is all zero are
    left out of the semantic term.
    """
    _require_ready(model)
    cfg = model.config
    x = _as_signal(signal)
    lat = extract_latents(model, x) if latents is None else latents
    codes = quantize(model, lat, depth)
    z_hat = rvq_decode(model.acoustic_rvq, codes[:, 1:])

    q_s = model.semantic_vq.entries[codes[:, 0]]
    keep = (np.linalg.norm(q_s, axis=1) > 0) & (np.linalg.norm(lat.s, axis=1) > 0)
    sem = semantic_loss(q_s[keep], lat.s[keep]) if keep.any() else None

    targets = subband_targets(lat)
    acoustic, acoustic_cos = [], []
    for layer in range(depth):
        q = model.acoustic_rvq.layers[layer].entries[codes[:, layer + 1]]
        res = acoustic_loss(layer_features(cfg, q), targets[cfg.band_for_layer(layer)], model.projections[layer])
        acoustic.append(res.loss)
        acoustic_cos.append(res.cosine)

    y = synthesize_latents(model, z_hat)
    recon = reconstruction_loss(x[: y.size], y, cfg.sample_rate)
    breakdown = total_loss(
        recon=recon,
        vq_commit=vq_commit_loss(lat.z, z_hat),
        semantic=0.0 if sem is None else sem.loss,
        acoustic=acoustic,
    )
    cosines = {"semantic_cos": None if sem is None else sem.cosine, "acoustic_cos": acoustic_cos}
    return breakdown, cosines


def cross_pairing(model: CodecModel, signal, latents: Latents | None = None) -> np.ndarray:
    """Raw alignment cosine of every acoustic layer against every subband.

    Entry ``[k, i]`` compares layer ``k``'s quantized output with subband
    ``i`` at full depth; a specialised layer scores highest on its own band.
    """
    _require_ready(model)
    cfg = model.config
    lat = extract_latents(model, signal) if latents is None else latents
    codes = quantize(model, lat)
    targets = subband_targets(lat)
    out = np.zeros((cfg.acoustic_layers, cfg.pqmf_bands))
    for layer in range(cfg.acoustic_layers):
        q = model.acoustic_rvq.layers[layer].entries[codes[:, layer + 1]]
        feats = layer_features(cfg, q)
        for band in range(cfg.pqmf_bands):
            out[layer, band] = acoustic_loss(feats, targets[band], model.projections[layer]).cosine
    return out


def matched_vs_mismatched(config: CodecConfig, pairing: np.ndarray) -> tuple[float, float]:
    """Mean cosine on each layer's own band and on all other bands."""
    own = np.zeros_like(pairing, dtype=bool)
    for layer in range(pairing.shape[0]):
        own[layer, config.band_for_layer(layer)] = True
    return float(pairing[own].mean()), float(pairing[~own].mean())


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 10
    ema_decay: float = 0.99
    reseed_threshold: float = 2.0
    steps: int = 20
    stage2: DepthDistribution = DepthDistribution.half_gaussian()
    s1: int | None = None
    s2: int | None = None
    seed: int = 0

    def schedule(self) -> DropoutSchedule:
        if self.s1 is None or self.s2 is None:
            return DropoutSchedule.for_steps(self.steps, self.stage2)
        return DropoutSchedule(self.s1, self.s2, self.stage2)


def _load_corpus(config: CodecConfig, corpus: Sequence) -> list[np.ndarray]:
    signals = []
    for item in corpus:
        if isinstance(item, (str, Path)):
            x, sr = audio.read_wav(item)
            if sr != config.sample_rate:
                raise RateMismatch(f"{item}: {sr} Hz, model expects {config.sample_rate} Hz")
            signals.append(x)
        else:
            signals.append(_as_signal(item))
    return signals


def _child_seed(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1)[0])


def train(config: CodecConfig, corpus: Sequence, training: TrainingConfig = TrainingConfig()) -> CodecModel:
    """Fit the semantic VQ and the subband-supervised acoustic RVQ on ``corpus``.

    ``corpus`` holds WAV paths or sample arrays at ``config.sample_rate``.
    After fitting, ``training.steps`` diagnostic steps evaluate the full
    objective on random corpus items at depths drawn from the dropout
    schedule; their records, then a final cross-pairing record, are kept in
    ``model.training_log``.
    """
    signals = _load_corpus(config, corpus)
    model = CodecModel.untrained(config)
    latents = [extract_latents(model, x) for x in signals]
    total = sum(len(lat) for lat in latents)
    needed = MIN_FRAMES_PER_ENTRY * config.codebook_size
    if total < needed:
        raise InsufficientData(f"corpus has {total} frames, need at least {needed}")
    z = np.concatenate([lat.z for lat in latents])
    s = np.concatenate([lat.s for lat in latents])

    sem_seed, ac_seed, diag_seed = np.random.SeedSequence(training.seed).spawn(3)
    common = dict(
        size=config.codebook_size,
        epochs=training.epochs,
        ema_decay=training.ema_decay,
        reseed_threshold=training.reseed_threshold,
        reserve_zero=config.reserve_zero,
    )
    log.info("training semantic codebook on %d frames", total)
    semantic = train_codebooks(s, num_layers=1, seed=_child_seed(sem_seed), **common)
    log.info("training %d acoustic layers", config.acoustic_layers)
    rvq = train_codebooks(
        z,
        num_layers=config.acoustic_layers,
        supervision=supervision_masks(config),
        seed=_child_seed(ac_seed),
        **common,
    )
    model = CodecModel(config, model.bank, semantic.layers[0], rvq)

    for layer, st in enumerate(rvq.stats):
        model.training_log.append(
            {
                "kind": "layer",
                "layer": layer + 1,
                "band": config.band_for_layer(layer) + 1,
                "residual_energy_in": st.residual_energy_in,
                "residual_energy_out": st.residual_energy_out,
                "epoch_errors": st.epoch_errors,
                "reseeded": st.reseeded,
            }
        )

    schedule = training.schedule()
    rng = np.random.default_rng(diag_seed)
    for step in range(training.steps):
        depth = schedule_depth(schedule, step, config.acoustic_layers, rng)
        item = int(rng.integers(len(signals)))
        breakdown, cosines = loss_breakdown(model, signals[item], depth, latents[item])
        record = {"kind": "step", "step": step, "stage": schedule.stage(step), "depth": depth, "item": item}
        record.update(breakdown.__dict__)
        record.update(cosines)
        model.training_log.append(record)
        log.debug("step %d stage %d depth %d total %.4f", step, record["stage"], depth, breakdown.total)

    pairing = np.mean([cross_pairing(model, x, lat) for x, lat in zip(signals, latents)], axis=0)
    matched, mismatched = matched_vs_mismatched(config, pairing)
    model.training_log.append(
        {"kind": "cross_pairing", "matrix": pairing.tolist(), "matched": matched, "mismatched": mismatched}
    )
    return model


def evaluate_signals(reference, decoded, sample_rate: int = 24000) -> MetricsReport:
    ref, est = _as_signal(reference), _as_signal(decoded)
    n = min(ref.size, est.size)
    return metrics(ref[:n], est[:n], sample_rate)


def evaluate(reference_file, decoded_file) -> MetricsReport:
    ref, sr_ref = audio.read_wav(reference_file)
    est, sr_est = audio.read_wav(decoded_file)
    if sr_ref != sr_est:
        raise RateMismatch(f"sample rates differ: {sr_ref} vs {sr_est}")
    return evaluate_signals(ref, est, sr_ref)


# --------------------------------------------------------------------------
# model file
# --------------------------------------------------------------------------


def model_to_bytes(model: CodecModel) -> bytes:
    _require_ready(model)
    cfg = model.config
    proto = model.bank.prototype
    parts = [
        MODEL_MAGIC,
        bytes([MODEL_VERSION]),
        _CONFIG.pack(
            cfg.sample_rate,
            cfg.frame_rate,
            cfg.total_codebooks,
            cfg.codebook_size,
            cfg.pqmf_bands,
            cfg.subband_coeffs,
            cfg.semantic_dim,
            cfg.pqmf_taps,
            cfg.semantic_mels,
            cfg.common_dim,
            int(cfg.reserve_zero),
        ),
        _PROTOTYPE.pack(proto.cutoff, proto.beta, proto.roundtrip_error_db),
        np.asarray(proto.taps, dtype="<f8").tobytes(),
    ]
    sem = codebook_to_bytes(model.semantic_vq)
    rvq = stack_to_bytes(model.acoustic_rvq)
    parts += [struct.pack("<I", len(sem)), sem, struct.pack("<I", len(rvq)), rvq]
    return b"".join(parts)


def model_from_bytes(data: bytes) -> CodecModel:
    if data[:4] != MODEL_MAGIC:
        raise NotAStream("not an MBCM model file")
    if len(data) < 5 or data[4] != MODEL_VERSION:
        raise NotAStream("unsupported model version")
    try:
        off = 5
        fields = _CONFIG.unpack_from(data, off)
        off += _CONFIG.size
        cfg = CodecConfig(*fields[:-1], reserve_zero=bool(fields[-1]))
        cutoff, beta, err = _PROTOTYPE.unpack_from(data, off)
        off += _PROTOTYPE.size
        taps = np.frombuffer(data, dtype="<f8", count=cfg.pqmf_taps, offset=off).astype(np.float64)
        off += 8 * cfg.pqmf_taps
        taps.setflags(write=False)
        bank = pqmf.build_bank(pqmf.PrototypeFilter(taps, cfg.pqmf_bands, cutoff, beta, err))
        (n_sem,) = struct.unpack_from("<I", data, off)
        semantic, _ = codebook_from_bytes(data[off + 4 : off + 4 + n_sem])
        off += 4 + n_sem
        (n_rvq,) = struct.unpack_from("<I", data, off)
        rvq, _ = stack_from_bytes(data[off + 4 : off + 4 + n_rvq])
    except CodecError:
        raise
    except (struct.error, ValueError) as exc:
        raise CorruptStream(f"malformed model file: {exc}") from exc
    return CodecModel(cfg, bank, semantic, rvq)


def save_model(model: CodecModel, path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path) -> CodecModel:
    return model_from_bytes(Path(path).read_bytes())

