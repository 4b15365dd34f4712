"""Vector quantization: codebooks, residual stacks and EMA k-means training."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import BadCode, BadDepth, CorruptStream, DimMismatch, EmptyCorpus, NotAStream

CODEBOOK_MAGIC = b"MBCB"
CODEBOOK_VERSION = 1
_CODEBOOK_HEADER = struct.Struct("<4sBHHB")
# caps the (rows, K, D) temporary of the exact distance computation
_CHUNK_ELEMENTS = 1 << 22


@dataclass
class Codebook:
    entries: np.ndarray  # (K, D) float64
    reserve_zero: bool = True

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float64)
        if self.entries.ndim != 2 or self.entries.shape[0] < 2:
            raise ValueError(f"codebook needs a (K>=2, D) matrix, got {self.entries.shape}")
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("codebook entries must be finite")
        if self.reserve_zero and np.any(self.entries[0] != 0.0):
            raise ValueError("reserve_zero codebook must have an all-zero entry 0")

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def dim(self) -> int:
        return self.entries.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return self.reserve_zero == other.reserve_zero and np.array_equal(self.entries, other.entries)


@dataclass
class LayerStats:
    epoch_errors: list[float]
    residual_energy_in: float
    residual_energy_out: float
    reseeded: int = 0


@dataclass(eq=False)
class RvqStack:
    layers: list[Codebook]
    stats: list[LayerStats] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self.layers:
            raise ValueError("an RVQ stack needs at least one layer")
        dims = {cb.dim for cb in self.layers}
        if len(dims) != 1:
            raise DimMismatch(f"layers disagree on dimension: {sorted(dims)}")

    @property
    def dim(self) -> int:
        return self.layers[0].dim

    def __len__(self) -> int:
        return len(self.layers)

    def __eq__(self, other):
        if not isinstance(other, RvqStack):
            return NotImplemented
        return self.layers == other.layers


class VqResult(NamedTuple):
    index: int
    quantized: np.ndarray
    residual: np.ndarray


class RvqResult(NamedTuple):
    codes: list[int]
    final_residual: np.ndarray
    residual_norms: list[float]


# --------------------------------------------------------------------------
# nearest-neighbour search
# --------------------------------------------------------------------------


def squared_distances(x: np.ndarray, entries: np.ndarray) -> np.ndarray:
    """Exact ``sum((x_i - e_k)**2)`` for every row/entry pair, shape ``(n, K)``."""
    x = np.atleast_2d(x)
    K, D = entries.shape
    rows = max(1, _CHUNK_ELEMENTS // max(1, K * D))
    out = np.empty((x.shape[0], K))
    for start in range(0, x.shape[0], rows):
        diff = x[start : start + rows, None, :] - entries[None, :, :]
        out[start : start + rows] = np.sum(diff * diff, axis=-1)
    return out


def _expanded(x: np.ndarray, entries: np.ndarray) -> np.ndarray:
    # ||e||^2 - 2 x.e; equals the squared distance minus ||x||^2 up to rounding
    return (entries * entries).sum(axis=1)[None, :] - 2.0 * (x @ entries.T)


def nearest(entries: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Index of the nearest entry for each row of ``x`` (lowest index on ties).

    Candidates come from the BLAS-expanded distance; any row whose runner-up
    is within rounding range of the best is re-ranked with the exact
    difference-based distance, so the result equals an exhaustive exact scan.
    """
    x = np.atleast_2d(x)
    fast = _expanded(x, entries)
    idx = np.argmin(fast, axis=1)
    best = fast[np.arange(x.shape[0]), idx]
    scale = np.sum(x * x, axis=1) + np.max(np.sum(entries * entries, axis=1))
    tol = 1e-9 * scale + 1e-300
    ambiguous = np.count_nonzero(fast <= (best + tol)[:, None], axis=1) > 1
    if ambiguous.any():
        rows = np.flatnonzero(ambiguous)
        idx[rows] = np.argmin(squared_distances(x[rows], entries), axis=1)
    return idx


def _fast_assign(x: np.ndarray, entries: np.ndarray) -> np.ndarray:
    # training-only: plain expanded argmin, near-ties left unresolved
    return np.argmin(_expanded(x, entries), axis=1)


def _check_dim(codebook_dim: int, x: np.ndarray) -> None:
    if x.shape[-1] != codebook_dim:
        raise DimMismatch(f"vector dimension {x.shape[-1]} != codebook dimension {codebook_dim}")


def vq_encode(codebook: Codebook, vector) -> VqResult:
    """Quantize one vector to its nearest codebook entry."""
    v = np.asarray(vector, dtype=np.float64)
    if v.ndim != 1:
        raise DimMismatch(f"expected a 1-D vector, got shape {v.shape}")
    _check_dim(codebook.dim, v)
    index = int(nearest(codebook.entries, v)[0])
    q = codebook.entries[index].copy()
    return VqResult(index, q, v - q)


def vq_encode_batch(codebook: Codebook, vectors) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise :func:`vq_encode`; returns ``(indices, quantized)``."""
    x = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    _check_dim(codebook.dim, x)
    idx = nearest(codebook.entries, x)
    return idx, codebook.entries[idx]


def _check_depth(stack: RvqStack, depth: int) -> None:
    if not 1 <= depth <= len(stack):
        raise BadDepth(f"depth {depth} outside [1, {len(stack)}]")


def rvq_encode(stack: RvqStack, vector, depth: int | None = None) -> RvqResult:
    """Quantize ``vector`` through the first ``depth`` layers of the stack.

    ``residual_norms[0]`` is the input norm and ``residual_norms[k]`` the
    norm left after layer ``k``. ``final_residual`` is ``vector`` minus the
    decoded reconstruction.
    """
    depth = len(stack) if depth is None else depth
    _check_depth(stack, depth)
    v = np.asarray(vector, dtype=np.float64)
    if v.ndim != 1:
        raise DimMismatch(f"expected a 1-D vector, got shape {v.shape}")
    _check_dim(stack.dim, v)
    zero = np.zeros((1, stack.dim))
    residual = v
    codes: list[int] = []
    norms = [float(np.sqrt(squared_distances(residual, zero)[0, 0]))]
    for cb in stack.layers[:depth]:
        d2 = squared_distances(residual, cb.entries)[0]
        k = int(np.argmin(d2))
        codes.append(k)
        residual = residual - cb.entries[k]
        norms.append(float(np.sqrt(squared_distances(residual, zero)[0, 0])))
    return RvqResult(codes, v - rvq_decode(stack, codes), norms)


def rvq_encode_batch(stack: RvqStack, vectors, depth: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise :func:`rvq_encode`; returns ``(codes (n, depth), final residuals)``."""
    depth = len(stack) if depth is None else depth
    _check_depth(stack, depth)
    x = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    _check_dim(stack.dim, x)
    residual = x
    codes = np.empty((x.shape[0], depth), dtype=np.int64)
    for layer, cb in enumerate(stack.layers[:depth]):
        idx = nearest(cb.entries, residual)
        codes[:, layer] = idx
        residual = residual - cb.entries[idx]
    return codes, x - rvq_decode(stack, codes)


def rvq_decode(stack: RvqStack, codes) -> np.ndarray:
    """Sum of the indexed entries over the first ``len(codes)`` layers.

    ``codes`` may be a single code list or an ``(n, depth)`` array, in which
    case an ``(n, D)`` array is returned.
    """
    c = np.asarray(codes, dtype=np.int64)
    single = c.ndim == 1
    c = np.atleast_2d(c) if c.size else c.reshape(1 if single else c.shape[0], 0)
    if c.shape[1] > len(stack):
        raise BadDepth(f"{c.shape[1]} codes for a {len(stack)}-layer stack")
    out = np.zeros((c.shape[0], stack.dim))
    for layer in range(c.shape[1]):
        cb = stack.layers[layer]
        col = c[:, layer]
        if np.any(col < 0) or np.any(col >= cb.size):
            raise BadCode(f"code outside [0, {cb.size}) at layer {layer}")
        out = out + cb.entries[col]
    return out[0] if single else out


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


def kmeans_pp_init(x: np.ndarray, size: int, reserve_zero: bool, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding; with ``reserve_zero`` the zero vector is the first centre."""
    n, dim = x.shape
    entries = np.zeros((size, dim))
    if reserve_zero:
        d2 = np.sum(x * x, axis=1)
    else:
        entries[0] = x[rng.integers(n)]
        d2 = np.sum((x - entries[0]) ** 2, axis=1)
    for k in range(1, size):
        total = float(d2.sum())
        if total > 0.0:
            i = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            i = min(i, n - 1)
        else:
            # every point already coincides with a centre
            i = int(rng.integers(n))
        entries[k] = x[i]
        d2 = np.minimum(d2, np.sum((x - entries[k]) ** 2, axis=1))
    return entries


def _quantization_error(x: np.ndarray, entries: np.ndarray, idx: np.ndarray) -> float:
    diff = x - entries[idx]
    return float(np.mean(np.sum(diff * diff, axis=1)))


def fit_codebook(
    targets: np.ndarray,
    size: int,
    *,
    epochs: int = 10,
    ema_decay: float = 0.99,
    reseed_threshold: float = 2.0,
    reserve_zero: bool = True,
    rng: np.random.Generator,
) -> tuple[Codebook, list[float], int]:
    """EMA k-means on ``targets``.

    Each epoch assigns every target to its nearest entry, folds the
    per-entry sums and counts into zero-initialised EMAs and moves each entry
    to the EMA mean. Entries whose bias-corrected EMA count is below
    ``reseed_threshold`` assignments per epoch are moved to random targets;
    a reseed that would raise the corpus error is rejected.

    Returns the codebook (entries rounded to float32 precision), the mean
    squared error at the start of each epoch plus after the last one, and
    the number of reseeded entries.
    """
    n, dim = targets.shape
    entries = kmeans_pp_init(targets, size, reserve_zero, rng)
    counts = np.zeros(size)
    sums = np.zeros((size, dim))
    age = np.zeros(size)
    errors: list[float] = []
    reseeded = 0
    for _ in range(epochs):
        idx = _fast_assign(targets, entries)
        errors.append(_quantization_error(targets, entries, idx))
        hits = np.bincount(idx, minlength=size).astype(np.float64)
        batch_sums = np.zeros((size, dim))
        np.add.at(batch_sums, idx, targets)
        counts = ema_decay * counts + (1.0 - ema_decay) * hits
        sums = ema_decay * sums + (1.0 - ema_decay) * batch_sums
        age += 1.0
        live = counts > 0.0
        entries[live] = sums[live] / counts[live, None]
        if reserve_zero:
            entries[0] = 0.0

        per_epoch = counts / (1.0 - ema_decay**age)
        dead = per_epoch < reseed_threshold
        if reserve_zero:
            dead[0] = False
        n_dead = int(dead.sum())
        if n_dead:
            picks = rng.choice(n, size=min(n_dead, n), replace=False)
            dead_idx = np.flatnonzero(dead)[: picks.size]
            candidate = entries.copy()
            candidate[dead_idx] = targets[picks]
            before = _quantization_error(targets, entries, _fast_assign(targets, entries))
            after = _quantization_error(targets, candidate, _fast_assign(targets, candidate))
            if after <= before:
                entries = candidate
                counts[dead_idx] = 0.0
                sums[dead_idx] = 0.0
                age[dead_idx] = 0.0
                reseeded += dead_idx.size
    errors.append(_quantization_error(targets, entries, _fast_assign(targets, entries)))
    entries = entries.astype(np.float32).astype(np.float64)
    return Codebook(entries, reserve_zero), errors, reseeded


def train_codebooks(
    corpus,
    *,
    size: int = 2048,
    num_layers: int,
    epochs: int = 10,
    ema_decay: float = 0.99,
    reseed_threshold: float = 2.0,
    reserve_zero: bool = True,
    supervision: Sequence[np.ndarray | None] | None = None,
    seed: int = 0,
) -> RvqStack:
    """Train an RVQ stack layer by layer on ``corpus`` (shape ``(n, D)``).

    Layer ``k`` is fit on the residuals left by layers ``1..k-1``. When
    ``supervision[k]`` is given it is a length-``D`` weight mask (typically
    the indicator of one subband's coefficient block); the layer is then
    seeded and trained exclusively on the masked residuals, so its entries
    live in that subspace. Nearest-neighbour search against the full residual
    then picks the same entry as search against the masked one.
    """
    x = np.asarray(corpus, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyCorpus("training corpus is empty")
    dim = x.shape[1]
    if supervision is not None and len(supervision) < num_layers:
        raise ValueError(f"supervision covers {len(supervision)} of {num_layers} layers")
    rng = np.random.default_rng(seed)
    layers: list[Codebook] = []
    stats: list[LayerStats] = []
    residual = x
    for layer in range(num_layers):
        mask = None if supervision is None else supervision[layer]
        if mask is None:
            targets = residual
        else:
            mask = np.asarray(mask, dtype=np.float64)
            if mask.shape != (dim,):
                raise DimMismatch(f"supervision mask shape {mask.shape} != ({dim},)")
            targets = residual * mask
        cb, errors, reseeded = fit_codebook(
            targets,
            size,
            epochs=epochs,
            ema_decay=ema_decay,
            reseed_threshold=reseed_threshold,
            reserve_zero=reserve_zero,
            rng=rng,
        )
        energy_in = float(np.mean(np.sum(residual * residual, axis=1)))
        residual = residual - cb.entries[nearest(cb.entries, residual)]
        energy_out = float(np.mean(np.sum(residual * residual, axis=1)))
        layers.append(cb)
        stats.append(LayerStats(errors, energy_in, energy_out, reseeded))
    return RvqStack(layers, stats)


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------


def codebook_to_bytes(codebook: Codebook) -> bytes:
    head = _CODEBOOK_HEADER.pack(
        CODEBOOK_MAGIC, CODEBOOK_VERSION, codebook.size, codebook.dim, int(codebook.reserve_zero)
    )
    return head + codebook.entries.astype("<f4").tobytes()


def codebook_from_bytes(data: bytes, offset: int = 0) -> tuple[Codebook, int]:
    """Parse one codebook at ``offset``; returns it and the offset just past it."""
    if len(data) - offset < _CODEBOOK_HEADER.size:
        raise CorruptStream("truncated codebook header")
    magic, version, size, dim, flags = _CODEBOOK_HEADER.unpack_from(data, offset)
    if magic != CODEBOOK_MAGIC or version != CODEBOOK_VERSION:
        raise NotAStream("not an MBCB codebook")
    start = offset + _CODEBOOK_HEADER.size
    end = start + 4 * size * dim
    if len(data) < end:
        raise CorruptStream("truncated codebook payload")
    entries = np.frombuffer(data[start:end], dtype="<f4").reshape(size, dim).astype(np.float64)
    return Codebook(entries, bool(flags & 1)), end


def stack_to_bytes(stack: RvqStack) -> bytes:
    return bytes([len(stack)]) + b"".join(codebook_to_bytes(cb) for cb in stack.layers)


def stack_from_bytes(data: bytes, offset: int = 0) -> tuple[RvqStack, int]:
    if len(data) <= offset:
        raise CorruptStream("empty stack")
    count = data[offset]
    offset += 1
    layers = []
    for _ in range(count):
        cb, offset = codebook_from_bytes(data, offset)
        layers.append(cb)
    return RvqStack(layers), offset
