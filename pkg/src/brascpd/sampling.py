"""Seeded mode and fiber sampling, and minibatch size schedules."""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

PRNG_NAME = "numpy.random.PCG64"


class SamplerState:
    """Single-owner random stream for mode and fiber draws.

    Parameters
    ----------
    seed : int or numpy.random.SeedSequence
        Fully determines the draw sequence.
    ndim : int
        Number of modes N.
    mode_weights : array_like, optional
        Relative chance of picking each mode; uniform when omitted. Zero
        weights are allowed, so a run can be pinned to a subset of modes.
    """

    prng = PRNG_NAME

    def __init__(self, seed, ndim: int, mode_weights=None):
        if ndim < 1:
            raise ValueError("need at least one mode")
        self.seed = seed
        self.rng = np.random.Generator(np.random.PCG64(seed))
        if mode_weights is None:
            w = np.full(ndim, 1.0 / ndim)
        else:
            w = np.asarray(mode_weights, dtype=float)
            if w.shape != (ndim,) or np.any(w < 0) or not np.isfinite(w).all() or w.sum() <= 0:
                raise ValueError(f"mode_weights must be {ndim} nonnegative numbers, not all zero")
            w = w / w.sum()
        self.mode_weights = w
        self._uniform = bool(np.all(w == w[0]))
        self._cdf = np.cumsum(w)

    @property
    def ndim(self) -> int:
        return self.mode_weights.size


def sample_mode(s: SamplerState) -> int:
    """Draw a 1-based mode index according to ``s.mode_weights``."""
    if s.ndim == 1:
        return 1
    if s._uniform:
        return int(s.rng.integers(s.ndim)) + 1
    # u in [0, 1) lands right of every cdf step it passes, so zero-weight
    # modes (flat cdf steps) are never chosen
    u = s.rng.random() * s._cdf[-1]
    return int(min(np.searchsorted(s._cdf, u, side="right"), s.ndim - 1)) + 1


def sample_fibers(s: SamplerState, mode: int, num_fibers: int, batch: int) -> np.ndarray:
    """Uniform ``batch``-subset of {1..num_fibers}, drawn without replacement.

    Dense batches (more than 1/16 of the pool) use a partial Fisher-Yates
    shuffle; sparse batches use rejection of repeated draws so memory stays
    O(batch).
    """
    if batch < 1:
        raise ValueError("batch size must be at least 1")
    if batch > num_fibers:
        raise ValueError(f"batch size {batch} exceeds the {num_fibers} available fibers")
    rng = s.rng
    if batch * 16 > num_fibers:
        pool = np.arange(1, num_fibers + 1, dtype=np.int64)
        for i in range(batch):
            k = i + int(rng.integers(num_fibers - i))
            pool[i], pool[k] = pool[k], pool[i]
        return pool[:batch].copy()
    chosen: dict = {}
    while len(chosen) < batch:
        for v in rng.integers(1, num_fibers + 1, size=batch - len(chosen)):
            chosen.setdefault(int(v), None)
    return np.fromiter(chosen, dtype=np.int64, count=batch)


@dataclass(frozen=True)
class BatchSchedule:
    """Fixed minibatch, or one growing like ceil(B0 * r**(1 + eps))."""

    kind: str = "fixed"
    base: int = 20
    growth: float = 0.0

    def __post_init__(self):
        if self.kind not in ("fixed", "growing"):
            raise ValueError(f"unknown batch schedule {self.kind!r}")
        if self.base < 1:
            raise ValueError("base batch size must be at least 1")
        if self.kind == "growing" and self.growth <= 0:
            raise ValueError("growing batch schedule needs growth > 0")

    def size(self, r: int, num_fibers: int) -> int:
        if self.kind == "fixed":
            b = self.base
        else:
            b = ceil(self.base * r ** (1.0 + self.growth))
        return int(min(b, num_fibers))
