"""Training-objective terms: semantic and subband-aligned cosine losses,
reconstruction, commitment and their unit-weight total.

Cosine terms are reported both raw (similarity in [-1, 1]) and wrapped as
``1 - cos`` so that lower is better. The adversarial term is carried in the
breakdown but is always zero here.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.fft import dct

from .errors import DegenerateVector, DimMismatch
from .spectral import mel_distance, stft_distance

_NORM_EPS = 1e-12


def dct_basis(size: int, num: int) -> np.ndarray:
    """First ``num`` orthonormal DCT-II basis vectors as columns, ``(size, num)``."""
    if not 1 <= num <= size:
        raise ValueError(f"need 1 <= num <= size, got num={num}, size={size}")
    return dct(np.eye(size), type=2, norm="ortho", axis=0).T[:, :num].copy()


@dataclass(frozen=True)
class ProjectionPair:
    """Maps codebook outputs (``a1``) and subband features (``a2``) to a
    shared dimension. Columns are unit-norm."""

    a1: np.ndarray  # (D_code, D_common)
    a2: np.ndarray  # (D_band, D_common)

    def __post_init__(self):
        if self.a1.shape[1] != self.a2.shape[1]:
            raise DimMismatch(f"common dimensions differ: {self.a1.shape} vs {self.a2.shape}")
        for m in (self.a1, self.a2):
            if not np.all(np.isfinite(m)):
                raise ValueError("projection entries must be finite")
            if not np.allclose(np.linalg.norm(m, axis=0), 1.0, atol=1e-9):
                raise ValueError("projection columns must have unit norm")

    @property
    def common_dim(self) -> int:
        return self.a1.shape[1]

    @classmethod
    def identity(cls, dim: int) -> "ProjectionPair":
        return cls(np.eye(dim), np.eye(dim))

    @classmethod
    def dct(cls, code_dim: int, band_dim: int, common_dim: int) -> "ProjectionPair":
        return cls(dct_basis(code_dim, common_dim), dct_basis(band_dim, common_dim))


class CosineLoss(NamedTuple):
    loss: float
    cosine: float
    skipped: int = 0


def _row_cosines(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    return np.sum(a * b, axis=-1) / (na * nb)


def semantic_loss(q_seman, s_target) -> CosineLoss:
    """``1 - mean_t cos(q_t, s_t)`` between quantized semantic vectors and targets."""
    q = np.atleast_2d(np.asarray(q_seman, dtype=np.float64))
    s = np.atleast_2d(np.asarray(s_target, dtype=np.float64))
    if q.shape != s.shape:
        raise DimMismatch(f"shape mismatch {q.shape} vs {s.shape}")
    if np.any(np.linalg.norm(q, axis=1) <= _NORM_EPS) or np.any(np.linalg.norm(s, axis=1) <= _NORM_EPS):
        raise DegenerateVector("semantic loss got a zero-norm row")
    cos = float(np.clip(np.mean(_row_cosines(q, s)), -1.0, 1.0))
    return CosineLoss(1.0 - cos, cos)


def acoustic_loss(q_acous, h_band, proj: ProjectionPair) -> CosineLoss:
    """Per-dimension temporal cosine between projected codebook output and
    projected subband features.

    Both ``(T, D)`` sequences are mapped to the common dimension; for each
    common dimension the two length-``T`` columns are compared, and the loss
    is ``1 - mean`` over columns. Columns with zero norm on either side are
    skipped and counted.
    """
    q = np.asarray(q_acous, dtype=np.float64)
    h = np.asarray(h_band, dtype=np.float64)
    if q.ndim != 2 or h.ndim != 2 or q.shape[0] != h.shape[0]:
        raise DimMismatch(f"need (T, D) inputs with equal T, got {q.shape} and {h.shape}")
    if q.shape[0] < 2:
        raise DimMismatch("acoustic loss needs at least two time steps")
    if q.shape[1] != proj.a1.shape[0] or h.shape[1] != proj.a2.shape[0]:
        raise DimMismatch("projection shapes do not match the inputs")
    pq = q @ proj.a1
    ph = h @ proj.a2
    nq = np.linalg.norm(pq, axis=0)
    nh = np.linalg.norm(ph, axis=0)
    ok = (nq > _NORM_EPS) & (nh > _NORM_EPS)
    skipped = int((~ok).sum())
    if not ok.any():
        return CosineLoss(1.0, 0.0, skipped)
    cos = np.sum(pq[:, ok] * ph[:, ok], axis=0) / (nq[ok] * nh[ok])
    mean = float(np.clip(np.mean(cos), -1.0, 1.0))
    return CosineLoss(1.0 - mean, mean, skipped)


def reconstruction_loss(reference, estimate, sample_rate: int = 24000) -> float:
    return stft_distance(reference, estimate) + mel_distance(reference, estimate, sample_rate)


def vq_commit_loss(pre_quant, post_quant) -> float:
    a = np.asarray(pre_quant, dtype=np.float64)
    b = np.asarray(post_quant, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


@dataclass
class LossBreakdown:
    gan: float
    recon: float
    vq_commit: float
    semantic: float
    acoustic_per_layer: list[float] = field(default_factory=list)
    total: float = 0.0

    @property
    def depth(self) -> int:
        return len(self.acoustic_per_layer)

    def to_record(self, **extra) -> str:
        return json.dumps({**extra, **asdict(self)}, sort_keys=True)


def total_loss(
    recon: float = 0.0,
    vq_commit: float = 0.0,
    semantic: float = 0.0,
    acoustic: Sequence[float] = (),
) -> LossBreakdown:
    """Unit-weight sum of every term; the adversarial slot is fixed at zero."""
    gan = 0.0
    acoustic = [float(a) for a in acoustic]
    total = gan + recon + vq_commit + semantic + sum(acoustic)
    return LossBreakdown(gan, float(recon), float(vq_commit), float(semantic), acoustic, float(total))
