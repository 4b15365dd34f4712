"""Quantizer-dropout depth distributions and the three-stage schedule.

Depth ``n_q`` is the number of active residual layers, drawn from
``{1, ..., N_q}``. Besides the uniform baseline there are three
non-uniform shapes (exponential, half-Gaussian, chi-squared) evaluated
pointwise at the integer depths and normalised, and a ``range`` kind that
restricts sampling to a contiguous window of layers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadDistribution

KINDS = ("uniform", "exponential", "half_gaussian", "chi_squared", "range")

# settings that worked best for each shape
DEFAULT_EXPONENTIAL_BASE = 0.6
DEFAULT_HALF_GAUSSIAN_SIGMA = 5.0
DEFAULT_CHI_SQUARED_DF = 4.0


@dataclass(frozen=True)
class DepthDistribution:
    kind: str
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadDistribution(f"unknown distribution kind {self.kind!r}")
        expected = {"uniform": 0, "exponential": 1, "half_gaussian": 1, "chi_squared": 1, "range": 2}[self.kind]
        if len(self.params) != expected:
            raise BadDistribution(f"{self.kind} takes {expected} parameter(s), got {self.params}")
        p = self.params
        if self.kind == "exponential" and not 0.0 < p[0] < 1.0:
            raise BadDistribution(f"exponential base must be in (0, 1), got {p[0]}")
        if self.kind == "half_gaussian" and not p[0] > 0.0:
            raise BadDistribution(f"sigma must be positive, got {p[0]}")
        if self.kind == "chi_squared" and not p[0] >= 1.0:
            raise BadDistribution(f"df must be >= 1, got {p[0]}")
        if self.kind == "range" and not (1 <= p[0] <= p[1] and float(p[0]).is_integer() and float(p[1]).is_integer()):
            raise BadDistribution(f"range needs integers 1 <= lo <= hi, got {p}")

    @classmethod
    def uniform(cls) -> "DepthDistribution":
        return cls("uniform")

    @classmethod
    def exponential(cls, base: float = DEFAULT_EXPONENTIAL_BASE) -> "DepthDistribution":
        return cls("exponential", (float(base),))

    @classmethod
    def half_gaussian(cls, sigma: float = DEFAULT_HALF_GAUSSIAN_SIGMA) -> "DepthDistribution":
        return cls("half_gaussian", (float(sigma),))

    @classmethod
    def chi_squared(cls, df: float = DEFAULT_CHI_SQUARED_DF) -> "DepthDistribution":
        return cls("chi_squared", (float(df),))

    @classmethod
    def range(cls, lo: int, hi: int) -> "DepthDistribution":
        return cls("range", (lo, hi))

    @classmethod
    def parse(cls, text: str) -> "DepthDistribution":
        """Parse ``kind[:p1[:p2]]``, e.g. ``exponential:0.6`` or ``range:1:4``."""
        kind, *rest = text.strip().split(":")
        try:
            params = tuple(float(v) for v in rest)
        except ValueError as exc:
            raise BadDistribution(f"bad parameters in {text!r}") from exc
        if kind == "range":
            params = tuple(int(v) for v in params)
        return cls(kind, params)

    def __str__(self) -> str:
        return ":".join([self.kind, *(f"{p:g}" for p in self.params)])


def pmf(dist: DepthDistribution, n_layers: int) -> np.ndarray:
    """Probability of each depth ``1..n_layers`` (index 0 is depth 1)."""
    if n_layers < 1:
        raise BadDistribution(f"need at least one layer, got {n_layers}")
    k = np.arange(1, n_layers + 1, dtype=np.float64)
    if dist.kind == "uniform":
        w = np.ones(n_layers)
    elif dist.kind == "exponential":
        w = dist.params[0] ** (k - 1.0)
    elif dist.kind == "half_gaussian":
        sigma = dist.params[0]
        w = np.exp(-((k - 1.0) ** 2) / (2.0 * sigma**2))
    elif dist.kind == "chi_squared":
        df = dist.params[0]
        w = k ** (df / 2.0 - 1.0) * np.exp(-k / 2.0)
    else:
        lo, hi = dist.params
        w = ((k >= lo) & (k <= hi)).astype(np.float64)
        if not w.any():
            raise BadDistribution(f"range {lo}..{hi} misses 1..{n_layers}")
    return w / w.sum()


def sample(dist: DepthDistribution, n_layers: int, rng: np.random.Generator, size: int | None = None):
    """Inverse-CDF draws of ``n_q``; an int when ``size`` is None, else an array."""
    cdf = np.cumsum(pmf(dist, n_layers))
    u = rng.random(size)
    depth = np.minimum(np.searchsorted(cdf, u, side="right"), n_layers - 1) + 1
    return int(depth) if size is None else depth.astype(np.int64)


@dataclass(frozen=True)
class DropoutSchedule:
    """Uniform until ``s1``, then ``stage2`` until ``s2``, then depths 1..4."""

    s1: int
    s2: int
    stage2: DepthDistribution = DepthDistribution("half_gaussian", (DEFAULT_HALF_GAUSSIAN_SIGMA,))
    stage3: DepthDistribution = DepthDistribution("range", (1, 4))

    def __post_init__(self):
        if not 0 < self.s1 < self.s2:
            raise BadDistribution(f"stage boundaries must satisfy 0 < s1 < s2, got {self.s1}, {self.s2}")

    @classmethod
    def for_steps(cls, total_steps: int, stage2: DepthDistribution | None = None,
                  first: float = 0.3, second: float = 0.8) -> "DropoutSchedule":
        s1 = max(1, int(round(first * total_steps)))
        s2 = max(s1 + 1, int(round(second * total_steps)))
        if stage2 is None:
            return cls(s1, s2)
        return cls(s1, s2, stage2)

    def stage(self, step: int) -> int:
        if step < self.s1:
            return 1
        if step < self.s2:
            return 2
        return 3

    def distribution(self, step: int) -> DepthDistribution:
        return {1: DepthDistribution.uniform(), 2: self.stage2, 3: self.stage3}[self.stage(step)]


def schedule_depth(schedule: DropoutSchedule, step: int, n_layers: int, rng: np.random.Generator) -> int:
    if step < 0:
        raise ValueError(f"step must be non-negative, got {step}")
    return sample(schedule.distribution(step), n_layers, rng)


def histogram(samples, n_layers: int) -> np.ndarray:
    """Empirical frequency of each depth ``1..n_layers``."""
    counts = np.bincount(np.asarray(samples, dtype=np.int64) - 1, minlength=n_layers)
    return counts / counts.sum()
